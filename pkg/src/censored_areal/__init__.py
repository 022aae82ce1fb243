"""Bayesian censored spatiotemporal regression on areal graphs.

DAGAR or SAR spatial dependence combined with AR(p) temporal dependence
in a separable covariance, fitted by a collapsed Metropolis-within-Gibbs
sampler that imputes censored and missing responses.
"""

__version__ = "0.1.0"

from .data import CensoredDataset, Status, load_dataset
from .graph import SpatialGraph, grid_graph, read_edge_list
from .inference import ModelConfig, RunConfig, collapsed_log_posterior, gibbs_fit, summarize
from .prediction import PredictionTask, predictive_draws
from .diagnostics import deviance_criteria, gelman_rubin, morans_i

__all__ = [
    "__version__",
    "CensoredDataset",
    "Status",
    "load_dataset",
    "SpatialGraph",
    "grid_graph",
    "read_edge_list",
    "ModelConfig",
    "RunConfig",
    "collapsed_log_posterior",
    "gibbs_fit",
    "summarize",
    "PredictionTask",
    "predictive_draws",
    "deviance_criteria",
    "gelman_rubin",
    "morans_i",
]
