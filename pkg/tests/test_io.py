import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sparsear import GridSeries, ModelConfig, fit_stvsar, fit_tvsar, segment
from sparsear.io import (
    BenchRow,
    InputError,
    SyntheticSpec,
    fmt,
    gen_synthetic,
    read_bench,
    read_coef_table,
    read_grid,
    read_univariate,
    write_bench,
    write_grid,
    write_seasonality,
    write_series,
    write_stv_coefs,
    write_truth,
    write_tv_coefs,
)
from sparsear.models import seasonality_map


def write(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_plain_column(tmp_path):
    np.testing.assert_array_equal(read_univariate(write(tmp_path, "3\n4\n5\n")), [3, 4, 5])


def test_header_and_named_column(tmp_path):
    p = write(tmp_path, "t,v\n1,3\n2,4\n")
    np.testing.assert_array_equal(read_univariate(p, "v"), [3, 4])
    np.testing.assert_array_equal(read_univariate(p), [3, 4])
    np.testing.assert_array_equal(read_univariate(p, 0), [1, 2])


def test_nan_reports_line(tmp_path):
    p = write(tmp_path, "v\n1\n2\n3\n4\n5\nnan\n8\n")
    with pytest.raises(InputError, match="row 7"):
        read_univariate(p)


@pytest.mark.parametrize("text, match", [
    ("", "empty"),
    ("v\n", "no data rows"),
    ("1,2\n3,\n", "row 2"),
    ("a,b\n1,2\n", "no column named 'c'"),
])
def test_univariate_errors(tmp_path, text, match):
    p = write(tmp_path, text)
    with pytest.raises(InputError, match=match):
        read_univariate(p, "c" if "a,b" in text else None)


def test_comments_and_trailing_blank_lines(tmp_path):
    p = write(tmp_path, "# source: test\nv\n1.5\n2.5\n\n\n")
    np.testing.assert_array_equal(read_univariate(p), [1.5, 2.5])


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_univariate(tmp_path / "absent.csv")


def test_grid_single_cell(tmp_path):
    rows = "".join(f"1,1,1,{t},{t * 0.5}\n" for t in range(1, 6))
    g = read_grid(write(tmp_path, "m,n,gamma,t,value\n" + rows))
    assert g.shape == (1, 1, 1)
    np.testing.assert_array_equal(g.cell(0, 0, 0), [0.5, 1, 1.5, 2, 2.5])


def test_grid_ragged_cell(tmp_path):
    text = "m,n,gamma,t,value\n" + "".join(f"1,1,1,{t},1\n" for t in (1, 2, 4)) + \
        "".join(f"1,2,1,{t},1\n" for t in (1, 2, 3, 4))
    with pytest.raises(InputError, match=r"cell \(m=1, n=1, gamma=1\) is ragged"):
        read_grid(write(tmp_path, text))


@pytest.mark.parametrize("text, match", [
    ("m,n,gamma,t,value\n1,1,1,1,2\n1,1,1,1,3\n", "duplicates"),
    ("m,n,g,t,value\n1,1,1,1,2\n", "expected header"),
    ("m,n,gamma,t,value\n1,1,1,1,inf\n", "non-finite"),
    ("m,n,gamma,t,value\n0,1,1,1,1\n", "1-based"),
    ("m,n,gamma,t,value\n1,1,x,1,1\n", "non-integer"),
    ("m,n,gamma,t,value\n1,1,1,1\n", "fields"),
    ("m,n,gamma,t,value\n", "no data rows"),
])
def test_grid_errors(tmp_path, text, match):
    with pytest.raises(InputError, match=match):
        read_grid(write(tmp_path, text))


def test_grid_absent_cells_are_masked(tmp_path):
    text = "m,n,gamma,t,value\n" + "".join(f"2,2,1,{t},{t}\n" for t in range(1, 4))
    g = read_grid(write(tmp_path, text))
    assert g.shape == (2, 2, 1)
    assert g.mask.sum() == 1 and g.mask[1, 1, 0]


def test_grid_round_trip(tmp_path):
    grid = gen_synthetic(SyntheticSpec(30, {1: 0.4, 3: 0.5}, 0.3, 1, (2, 2, 2)))
    write_grid(tmp_path / "g.csv", grid)
    back = read_grid(tmp_path / "g.csv")
    np.testing.assert_array_equal(back.mask, grid.mask)
    for a, b in zip(back.values, grid.values):
        np.testing.assert_array_equal(a, b)


@settings(max_examples=30)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_full_precision_round_trip(x):
    assert all(float(fmt(v)) == v for v in x)


def test_series_round_trip(tmp_path, rng):
    x = rng.normal(size=50) * 1e-7 + 1e5
    write_series(tmp_path / "s.csv", x)
    np.testing.assert_array_equal(read_univariate(tmp_path / "s.csv", "value"), x)


def test_coefficient_tables(tmp_path):
    x = gen_synthetic(SyntheticSpec(300, {1: 0.3, 6: 0.6}, 0.1, 2))
    fit = fit_tvsar(segment(x, 100), ModelConfig(6, 2))
    write_tv_coefs(tmp_path / "tv.csv", fit)
    meta, header, rows = read_coef_table(tmp_path / "tv.csv")
    assert header == ["gamma", "k", "w"]
    assert meta["omega"] == ",".join(map(str, fit.support))
    W = np.zeros_like(fit.coefs)
    for g, k, w in rows:
        assert w != 0
        W[int(g) - 1, int(k) - 1] = w
    np.testing.assert_array_equal(W, fit.coefs)

    grid = gen_synthetic(SyntheticSpec(60, {1: 0.3, 6: 0.6}, 0.1, 3, (2, 3, 1)))
    res = fit_stvsar(grid, ModelConfig(6, 2))
    write_stv_coefs(tmp_path / "stv.csv", res)
    meta, header, rows = read_coef_table(tmp_path / "stv.csv")
    assert header == ["m", "n", "gamma", "k", "w"]
    assert len(rows) == 6 * len(res.support)
    for m, n, g, k, w in rows:
        assert w == res.coefs[int(m) - 1, int(n) - 1, int(g) - 1, res.support.index(int(k))]

    lag = res.support[-1]
    write_seasonality(tmp_path / "map.csv", seasonality_map(res, lag), lag)
    meta, header, rows = read_coef_table(tmp_path / "map.csv")
    assert meta["k"] == str(lag) and header == ["m", "n", "gamma", "value"]
    np.testing.assert_array_equal([r[3] for r in rows], seasonality_map(res, lag).reshape(-1))


def test_seasonality_writes_nan_for_masked(tmp_path):
    write_seasonality(tmp_path / "m.csv", np.array([[[0.5], [np.nan]]]), 12)
    _, _, rows = read_coef_table(tmp_path / "m.csv")
    assert rows[0][3] == 0.5 and np.isnan(rows[1][3])


def test_bench_round_trip(tmp_path):
    rows = [BenchRow("a", 12, 2, "mio", 1.0 / 3.0, 0.25, True), BenchRow("b", 24, 4, "nnsp", 7.5, 1e-4, False)]
    write_bench(tmp_path / "b.csv", rows)
    assert read_bench(tmp_path / "b.csv") == rows


def test_generator_periodic_and_seeded():
    x = gen_synthetic(SyntheticSpec(40, {5: 1.0}))
    np.testing.assert_allclose(x[5:], x[:-5], rtol=0, atol=0)
    a = gen_synthetic(SyntheticSpec(50, {1: 0.5, 3: 0.3}, noise=0.2, seed=9))
    b = gen_synthetic(SyntheticSpec(50, {1: 0.5, 3: 0.3}, noise=0.2, seed=9))
    c = gen_synthetic(SyntheticSpec(50, {1: 0.5, 3: 0.3}, noise=0.2, seed=10))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_generator_grid_overrides():
    spec = SyntheticSpec(60, {1: 0.5}, noise=0.0, seed=1, grid=(2, 2, 3), overrides={(2, 1): {4: 1.0}})
    g = gen_synthetic(spec)
    assert isinstance(g, GridSeries) and g.shape == (2, 2, 3)
    x = g.cell(1, 0, 2)
    np.testing.assert_array_equal(x[4:], x[:-4])
    with pytest.raises(ValueError, match="outside"):
        gen_synthetic(SyntheticSpec(60, {1: 0.5}, grid=(2, 2, 1), overrides={(3, 1): {1: 0.2}}))


@pytest.mark.parametrize("kwargs, match", [
    (dict(length=10, lags={1: 0.7, 2: 0.5}), "sum"),
    (dict(length=10, lags={1: -0.1}), "non-negative"),
    (dict(length=10, lags={0: 0.1}), "positive integers"),
    (dict(length=10, lags={}), "at least one"),
    (dict(length=0, lags={1: 0.5}), "length"),
    (dict(length=10, lags={1: 0.5}, noise=-1.0), "noise"),
    (dict(length=10, lags={1: 0.5}, grid=(2, 0, 1)), "grid"),
])
def test_generator_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        SyntheticSpec(**kwargs)


def test_truth_sidecar(tmp_path):
    spec = SyntheticSpec(20, {12: 0.6, 1: 0.3}, 0.1, 4, (2, 1, 1), {(1, 1): {1: 0.9}})
    write_truth(tmp_path / "t.json", spec)
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["lags"] == {"1": 0.3, "12": 0.6}
    assert doc["overrides"] == {"1,1": {"1": 0.9}}
    assert doc["grid"] == [2, 1, 1] and doc["seed"] == 4
