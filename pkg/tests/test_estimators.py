import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sparsear import ModelConfig, SparseAR, STVSparseAR, TVSparseAR, fit_sar, fit_stvsar, fit_tvsar, segment
from sparsear.io import SyntheticSpec, gen_synthetic


@pytest.fixture
def x():
    return gen_synthetic(SyntheticSpec(300, {1: 0.3, 12: 0.6}, 0.1, 1))


def test_params_and_clone():
    est = SparseAR(order=12, sparsity=2, solver="mio-dvp", tau0=5)
    assert est.get_params() == {"order": 12, "sparsity": 2, "solver": "mio-dvp", "tau0": 5, "bigm": 5.0,
                                "max_nodes": 1_000_000}
    c = clone(est).set_params(sparsity=3)
    assert c.sparsity == 3 and est.sparsity == 2
    assert set(TVSparseAR().get_params()) >= {"segment_length", "n_jobs"}
    assert STVSparseAR().get_params()["order"] == 12


def test_sparse_ar_fit_predict_score(x):
    est = SparseAR(order=12, sparsity=2).fit(x)
    ref = fit_sar(x, ModelConfig(12, 2))
    np.testing.assert_array_equal(est.coef_, ref.w)
    assert est.support_ == (1, 12) and est.stats_.certified
    pred = est.predict(x)
    assert pred.shape == (x.size - 12,)
    np.testing.assert_allclose(pred, [est.coef_ @ x[t - 12:t][::-1] for t in range(12, x.size)])
    assert 0.5 < est.score(x) <= 1.0
    assert est.objective_ == pytest.approx(float(np.sum((x[12:] - pred) ** 2)), rel=1e-9)


def test_sparse_ar_accepts_column_vector(x):
    a = SparseAR(order=4, sparsity=1).fit(x[:, None])
    b = SparseAR(order=4, sparsity=1).fit(x)
    np.testing.assert_array_equal(a.coef_, b.coef_)


@pytest.mark.parametrize("params, match", [
    (dict(order=0), "order"),
    (dict(order=2.5), "order"),
    (dict(order=4, sparsity=True), "sparsity"),
    (dict(order=4, sparsity=5), "sparsity"),
    (dict(order=4, sparsity=1, solver="ols"), "solver"),
    (dict(order=400, sparsity=1), "observations"),
])
def test_sparse_ar_validation(x, params, match):
    with pytest.raises(ValueError, match=match):
        SparseAR(**params).fit(x)


def test_not_fitted(x):
    with pytest.raises(NotFittedError):
        SparseAR().predict(x)
    with pytest.raises(NotFittedError):
        STVSparseAR().transform(np.zeros((1, 1, 1, 20)))


def test_tv_sparse_ar_inputs(x):
    est = TVSparseAR(order=12, sparsity=2, segment_length=100).fit(x)
    ref = fit_tvsar(segment(x, 100), ModelConfig(12, 2))
    np.testing.assert_array_equal(est.coef_, ref.coefs)
    assert est.n_segments_ == 3 and est.n_dropped_ == 0
    as_list = TVSparseAR(order=12, sparsity=2).fit([x[:100], x[100:200], x[200:]])
    np.testing.assert_array_equal(as_list.coef_, est.coef_)
    as_rows = TVSparseAR(order=12, sparsity=2).fit(x.reshape(3, 100))
    np.testing.assert_array_equal(as_rows.coef_, est.coef_)
    preds = est.predict(x)
    assert len(preds) == 3 and preds[0].shape == (88,)
    with pytest.raises(ValueError, match="expected 3 segments"):
        est.predict(x[:200])


def test_tv_sparse_ar_short_segment(x):
    with pytest.raises(ValueError, match="does not exceed"):
        TVSparseAR(order=12, sparsity=1, segment_length=10).fit(x)


def grid_array():
    return gen_synthetic(SyntheticSpec(80, {1: 0.3, 12: 0.6}, 0.1, 2, (3, 4, 2))).values


def test_stv_sparse_ar(tmp_path):
    vals = grid_array()
    arr = np.stack(vals, axis=2)
    est = STVSparseAR(order=12, sparsity=2)
    coefs = est.fit_transform(arr)
    ref = fit_stvsar(gen_synthetic(SyntheticSpec(80, {1: 0.3, 12: 0.6}, 0.1, 2, (3, 4, 2))), ModelConfig(12, 2))
    assert est.support_ == ref.support
    np.testing.assert_array_equal(coefs, ref.coefs)
    np.testing.assert_allclose(est.transform(arr), coefs, atol=1e-12)
    np.testing.assert_array_equal(est.seasonality_map(12), ref.coefs[..., ref.support.index(12)])


def test_stv_sparse_ar_masks_non_finite_cells():
    arr = np.stack(grid_array(), axis=2).copy()
    arr[0, 1, 1, 5] = np.nan
    est = STVSparseAR(order=12, sparsity=2).fit(arr)
    assert np.isnan(est.coef_[0, 1, 1]).all()
    assert np.isfinite(est.coef_[0, 1, 0]).all()
    out = est.transform(arr)
    assert np.isnan(out[0, 1, 1]).all()
    with pytest.raises(ValueError, match="M, N, Gamma, T"):
        est.transform(arr[0])
