import numpy as np
import pytest

from censored_areal.data import CensoredDataset, Status
from censored_areal.inference import ChainResult

# acceptance outcomes, filled by test_acceptance and echoed at the end of the run
ACCEPTANCE: dict = {}


def record(criterion: int, name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE[criterion] = (name, ok, detail)
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {name}  ({detail})")


def make_dataset(y, n, T, X=None, status=None, lower=None, upper=None, lod=None):
    """Panel helper: ``y`` site-major; NaN where not observed."""
    y = np.asarray(y, dtype=float)
    N = n * T
    if X is None:
        X = np.ones((N, 1))
    X = np.asarray(X, dtype=float)
    st = np.zeros(N, dtype=np.int8) if status is None else np.asarray(status, dtype=np.int8)
    lo = y.copy() if lower is None else np.asarray(lower, dtype=float)
    hi = y.copy() if upper is None else np.asarray(upper, dtype=float)
    names = ("intercept",) + tuple(f"x{j}" for j in range(1, X.shape[1]))
    yy = np.where(st == Status.OBSERVED, y, np.nan)
    return CensoredDataset(n, T, yy, st, lo, hi, X, names, tuple(str(i + 1) for i in range(n)),
                           tuple(range(1, T + 1)), lod)


def make_chain(beta, sigma2, psi, rho, gamma, y_cen=None, cen_idx=None, draws=1):
    """A chain that repeats one parameter value ``draws`` times."""
    beta = np.tile(np.asarray(beta, dtype=float), (draws, 1))
    gamma = np.tile(np.atleast_1d(np.asarray(gamma, dtype=float)), (draws, 1))
    s = np.full(draws, float(sigma2))
    yc = None if y_cen is None else np.tile(np.asarray(y_cen, dtype=float), (draws, 1))
    ci = np.zeros(0, dtype=int) if cen_idx is None else np.asarray(cen_idx)
    return ChainResult(np.arange(1, draws + 1), beta, s, s * psi, np.full(draws, float(psi)),
                       np.full(draws, float(rho)), gamma, np.zeros(draws), np.ones(draws, dtype=bool),
                       1.0, {}, yc, ci)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
