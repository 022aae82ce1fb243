import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from censored_areal.cli import bundled_paths
from censored_areal.data import (CensorStatus, Status, apply_detection_limit, center_covariates,
                                 load_dataset, log_response, partition, read_dataset_csv, split_holdout,
                                 write_dataset)
from censored_areal.errors import DataError, DuplicateCell, ParseError, UnknownStation
from censored_areal.graph import SpatialGraph, path_graph

from conftest import make_dataset

HEADER = "station,time_index,y,status,lower,upper,x\n"


def write(tmp_path, body, name="d.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


def test_complete_file_has_no_censoring(tmp_path):
    p = write(tmp_path, "1,1,1.0,obs,,,0.1\n1,2,2.0,obs,,,0.2\n2,1,3.0,obs,,,0.3\n2,2,4.0,obs,,,0.4\n")
    ds = read_dataset_csv(p, path_graph(2))
    assert ds.N == 4 and ds.n_censored == 0
    np.testing.assert_array_equal(ds.y, [1, 2, 3, 4])
    assert ds.covariate_names == ("intercept", "x")


def test_absent_row_is_missing(tmp_path):
    p = write(tmp_path, "1,1,1.0,obs,,,0.1\n1,2,2.0,obs,,,0.2\n2,1,3.0,obs,,,0.3\n")
    ds = read_dataset_csv(p, path_graph(2))
    assert ds.n_censored == 1 and ds.cell_status(3).kind == Status.MISSING
    # covariates of an absent row come from the same time at other sites
    assert ds.X[3, 1] == pytest.approx(0.2)


def test_censoring_tokens(tmp_path):
    p = write(tmp_path, "1,1,,left,,0.5,0\n1,2,,right,2,,0\n2,1,,interval,1,3,0\n2,2,,missing,,,0\n")
    ds = read_dataset_csv(p, path_graph(2))
    assert [Status(s) for s in ds.status] == [Status.LEFT, Status.RIGHT, Status.INTERVAL, Status.MISSING]
    assert ds.upper[0] == 0.5 and ds.lower[0] == -math.inf
    assert ds.lower[1] == 2 and ds.upper[1] == math.inf
    assert (ds.lower[2], ds.upper[2]) == (1, 3)


@pytest.mark.parametrize("body,err", [
    ("1,1,abc,obs,,,0\n", ParseError),
    ("1,1,1,weird,,,0\n", ParseError),
    ("9,1,1,obs,,,0\n", UnknownStation),
    ("zz,1,1,obs,,,0\n", UnknownStation),
    ("1,1,1,obs,,,0\n1,1,2,obs,,,0\n", DuplicateCell),
    ("1,1,,interval,3,1,0\n", ParseError),
])
def test_parse_errors(tmp_path, body, err):
    with pytest.raises(err):
        read_dataset_csv(write(tmp_path, body), path_graph(2))


def test_censor_status_validation():
    with pytest.raises(DataError):
        CensorStatus(Status.INTERVAL, 2.0, 1.0)
    assert CensorStatus.missing().lower == -math.inf


def test_round_trip(tmp_path):
    g = SpatialGraph(2, ((0, 1),), ("a", "b"))
    p = write(tmp_path, "a,1,1.5,obs,,,0.1\na,2,,left,,0.5,0.2\nb,1,,missing,,,0.3\nb,2,,interval,1,2,0.4\n")
    ds = read_dataset_csv(p, g)
    q = tmp_path / "out.csv"
    write_dataset(ds, q)
    assert read_dataset_csv(q, g).semantically_equal(ds)


def test_partition_alternating():
    ds = make_dataset([1, np.nan, 3, np.nan], 1, 4, status=[0, 1, 0, 4],
                      lower=[1, -np.inf, 3, -np.inf], upper=[1, 0.0, 3, np.inf])
    part = partition(ds)
    np.testing.assert_array_equal(part.obs_idx, [0, 2])
    np.testing.assert_array_equal(part.cen_idx, [1, 3])
    full = make_dataset([1, 2, 3, 4], 1, 4)
    assert partition(full).cen_idx.size == 0


def test_detection_limit():
    ds = make_dataset(np.arange(1.0, 21.0), 2, 10)
    assert apply_detection_limit(ds, 0.5).n_censored == 0
    q = np.sort(ds.y)[2]
    cut = apply_detection_limit(ds, q, "left")
    assert cut.count(Status.LEFT) == 3 and cut.lod == q
    assert np.all(cut.upper[cut.status == Status.LEFT] == q)
    assert apply_detection_limit(ds, math.inf, "left").count(Status.LEFT) == 20
    assert apply_detection_limit(ds, 18.0, "right").count(Status.RIGHT) == 3


def test_split_center_log():
    X = np.column_stack([np.ones(12), np.arange(12.0)])
    ds = make_dataset(np.exp(np.arange(12.0) / 10), 2, 6, X=X)
    train, test = split_holdout(ds, 2)
    assert (train.T, test.T) == (4, 2) and train.N + test.N == ds.N
    assert test.time_labels == (5, 6)
    np.testing.assert_array_equal(test.X[:, 1], [4, 5, 10, 11])
    c, means = center_covariates(train)
    assert means[0] == 0 and c.X[:, 1].mean() == pytest.approx(0)
    ct, _ = center_covariates(test, means)
    np.testing.assert_allclose(ct.X[:, 1], test.X[:, 1] - means[1])
    np.testing.assert_allclose(log_response(ds).y, np.arange(12.0) / 10)
    with pytest.raises(Exception):
        split_holdout(ds, 6)


def test_beijing_standin_shape():
    data, graph = bundled_paths("beijing")
    ds, g = load_dataset(data, graph, {"covariates": ["TEMP", "WSPM", "PRES"]})
    assert (ds.n, ds.T, ds.N) == (12, 190, 2280)
    assert ds.count(Status.MISSING) == 55 and ds.n_censored == 55
    train, test = split_holdout(ds, 6)
    assert (train.N, test.N) == (2208, 72)


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(-50, 50), min_size=4, max_size=30), q=st.floats(-60, 60))
def test_detection_limit_properties(vals, q):
    n = len(vals)
    ds = make_dataset(vals, 1, n)
    cut = apply_detection_limit(ds, q, "left")
    assert cut.count(Status.LEFT) == sum(v <= q for v in vals)
    part = partition(cut)
    assert np.array_equal(np.sort(part.order), np.arange(n))
    assert part.n_obs + part.n_cen == n
