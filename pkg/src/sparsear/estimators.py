"""scikit-learn style estimators wrapping the fitting pipelines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_grid, check_positive_int, check_segments, check_series
from .core import ModelConfig, build_design
from .models import fit_sar, fit_stvsar, fit_tvsar, seasonality_map, stage2_fit

__all__ = ["SparseAR", "STVSparseAR", "TVSparseAR"]


class _SparseARParams(BaseEstimator):
    def _config(self) -> ModelConfig:
        return ModelConfig(
            order=check_positive_int(self.order, "order"),
            sparsity=check_positive_int(self.sparsity, "sparsity"),
            solver=self.solver,
            bigm=float(self.bigm),
            tau0=self.tau0,
            max_nodes=self.max_nodes,
            n_jobs=getattr(self, "n_jobs", 1),
        )


class SparseAR(_SparseARParams):
    """Non-negative autoregression with at most ``sparsity`` nonzero lags.

    Parameters
    ----------
    order : int
        Number of lags ``d``.
    sparsity : int
        Maximum number of selected lags ``tau``.
    solver : {"mio", "mio-dvp", "nnsp"}
        Exact branch-and-bound, branch-and-bound over pruned candidates, or
        greedy subspace pursuit.
    tau0 : int, optional
        Pruning sparsity for ``"mio-dvp"``.
    bigm : float
        Upper bound on every coefficient.
    max_nodes : int
        Branch-and-bound node budget.

    Attributes
    ----------
    coef_ : ndarray of shape (order,)
        ``coef_[k - 1]`` is the weight of lag ``k``.
    support_ : tuple of int
        Selected 1-based lags.
    objective_ : float
        Residual sum of squares of the fit.
    stats_ : SolveStats
    """

    def __init__(self, order=1, sparsity=1, solver="mio", tau0=None, bigm=5.0, max_nodes=1_000_000):
        self.order = order
        self.sparsity = sparsity
        self.solver = solver
        self.tau0 = tau0
        self.bigm = bigm
        self.max_nodes = max_nodes

    def fit(self, X, y=None):
        cfg = self._config()
        x = check_series(X, cfg.order)
        self.fit_ = fit_sar(x, cfg)
        self.coef_ = self.fit_.w.copy()
        self.support_ = self.fit_.support
        self.objective_ = self.fit_.objective
        self.stats_ = self.fit_.stats
        return self

    def predict(self, X):
        """One-step-ahead predictions of ``X[d:]`` from the preceding lags."""
        check_is_fitted(self, "coef_")
        dp = build_design(check_series(X, self.coef_.size), self.coef_.size)
        return dp.A @ self.coef_

    def score(self, X, y=None):
        """Coefficient of determination of the one-step predictions."""
        x = check_series(X, self.coef_.size)
        target = x[self.coef_.size:]
        resid = target - self.predict(x)
        ss_tot = float(np.sum((target - target.mean()) ** 2))
        return 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else np.nan


class TVSparseAR(_SparseARParams):
    """Per-segment sparse AR with one support shared by all segments.

    ``fit`` takes one series plus ``segment_length``, a list of segment
    series, or a :class:`SegmentedSeries`.

    Attributes
    ----------
    coef_ : ndarray of shape (n_segments, order)
    support_ : tuple of int
    segment_objectives_ : tuple of float
    """

    def __init__(
        self,
        order=1,
        sparsity=1,
        solver="mio",
        tau0=None,
        bigm=5.0,
        segment_length=None,
        max_nodes=1_000_000,
        n_jobs=1,
    ):
        self.order = order
        self.sparsity = sparsity
        self.solver = solver
        self.tau0 = tau0
        self.bigm = bigm
        self.segment_length = segment_length
        self.max_nodes = max_nodes
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        cfg = self._config()
        ss = check_segments(X, self.segment_length, cfg.order)
        self.fit_ = fit_tvsar(ss, cfg)
        self.coef_ = self.fit_.coefs.copy()
        self.support_ = self.fit_.support
        self.objective_ = self.fit_.objective
        self.segment_objectives_ = self.fit_.block_objectives
        self.n_segments_ = ss.n_segments
        self.n_dropped_ = ss.dropped.size
        self.stats_ = self.fit_.stats
        return self

    def predict(self, X):
        """One-step-ahead predictions for each segment, as a list of arrays."""
        check_is_fitted(self, "coef_")
        ss = check_segments(X, self.segment_length, self.coef_.shape[1])
        if ss.n_segments != self.coef_.shape[0]:
            raise ValueError(f"expected {self.coef_.shape[0]} segments, got {ss.n_segments}")
        d = self.coef_.shape[1]
        return [build_design(s, d).A @ w for s, w in zip(ss.segments, self.coef_)]


class STVSparseAR(TransformerMixin, _SparseARParams):
    """Grid-wide sparse AR: one global support, per-cell coefficients.

    ``fit`` takes a :class:`GridSeries` or an ``(M, N, Gamma, T)`` array
    (cells with non-finite values are masked). ``transform`` refits the cells
    of a new grid on the learned support and returns the
    ``(M, N, Gamma, |support|)`` coefficient array.
    """

    def __init__(self, order=12, sparsity=3, solver="mio", tau0=None, bigm=5.0, max_nodes=1_000_000, n_jobs=1):
        self.order = order
        self.sparsity = sparsity
        self.solver = solver
        self.tau0 = tau0
        self.bigm = bigm
        self.max_nodes = max_nodes
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        cfg = self._config()
        self.result_ = fit_stvsar(check_grid(X), cfg)
        self.support_ = self.result_.support
        self.coef_ = self.result_.coefs
        self.global_coef_ = self.result_.global_coef
        self.cell_objectives_ = self.result_.cell_objectives
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        coefs, _ = stage2_fit(check_grid(X), self.support_, self.result_.order, float(self.bigm), n_jobs=self.n_jobs)
        return coefs

    def fit_transform(self, X, y=None):
        return self.fit(X).coef_

    def seasonality_map(self, lag: int):
        check_is_fitted(self, "result_")
        return seasonality_map(self.result_, lag)
