"""Fitting pipelines: single series, segmented series and spatial grids."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .core import GridSeries, ModelConfig, SegmentedSeries, build_design, lags_to_pos, pos_to_lags
from .greedy import dvp_candidates, nnsp
from .mio import SolveStats, SparseFit, solve_shared_support
from .qp import GramSystem, bvls_nonneg, gram_aggregate, gram_from_design, restricted_fit, restricted_fit_batch

__all__ = [
    "StvSarResult",
    "TvSarResult",
    "evaluate_cells",
    "fit_cells_exact",
    "fit_sar",
    "fit_stvsar",
    "fit_tvsar",
    "grid_gram",
    "seasonality_map",
    "stage2_fit",
]

TvSarResult = SparseFit

BATCH_MAX_SUPPORT = 5
CELL_CHUNK = 8192
EXACT_MAX_CELLS = 400


def _greedy_fit(systems: list[GramSystem], cfg: ModelConfig, g=None, t0=None) -> SparseFit:
    """Support from pursuit on the summed system, then per-block restricted fits."""
    t0 = time.perf_counter() if t0 is None else t0
    if g is None:
        agg = systems[0] if len(systems) == 1 else gram_aggregate(systems)
        g = nnsp(agg, cfg.sparsity, cfg.max_iter, upper=cfg.bigm)
    if len(systems) == 1:
        W = g.w[None, :]
        objs = (g.objective,)
        certified = g.certified
    else:
        sols = [restricted_fit(s, g.support, cfg.bigm) for s in systems]
        W = np.vstack([s.w for s in sols])
        objs = tuple(s.objective for s in sols)
        certified = g.certified and all(s.certified for s in sols)
    total = float(sum(objs))
    stats = SolveStats(
        nodes_explored=0,
        incumbent_objective=total,
        best_bound=np.nan,
        gap=np.nan,
        wall_time=time.perf_counter() - t0,
        certified=False,
        qp_uncertified=0 if certified else 1,
    )
    return SparseFit(
        coefs=W,
        support=pos_to_lags(np.flatnonzero(np.any(W > 0, axis=0))),
        objective=total,
        block_objectives=objs,
        stats=stats,
        box_binding=bool(np.any(W >= cfg.bigm - 1e-6)),
    )


def _solve_systems(systems: list[GramSystem], cfg: ModelConfig) -> SparseFit:
    """Dispatch on ``cfg.solver``.

    The greedy fit at sparsity ``tau`` is computed first for every solver. The
    exact solvers use its support as a starting incumbent, and ``mio-dvp``
    adds it to the pruned candidate set, so both exact paths can never end
    up worse than the greedy answer.
    """
    t0 = time.perf_counter()
    agg = systems[0] if len(systems) == 1 else gram_aggregate(systems)
    greedy = nnsp(agg, cfg.sparsity, cfg.max_iter, upper=cfg.bigm)
    if cfg.solver == "nnsp":
        return _greedy_fit(systems, cfg, greedy, t0)
    cand = None
    if cfg.solver == "mio-dvp":
        screened = dvp_candidates(systems, cfg.tau0, cfg.max_iter, upper=cfg.bigm, n_jobs=cfg.n_jobs)
        cand = tuple(sorted(set(screened) | set(greedy.selected)))
    return solve_shared_support(
        systems, cfg.sparsity, cfg.bigm, cand, max_nodes=cfg.max_nodes, warm_supports=[greedy.selected]
    )


def fit_sar(x, cfg: ModelConfig) -> SparseFit:
    """Sparse non-negative AR fit of one series with the configured solver.

    ``mio`` is exact over all lags; ``mio-dvp`` is exact over the lags kept by
    pursuit at sparsity ``tau0``; ``nnsp`` is the greedy fit alone.
    """
    gs = gram_from_design(build_design(x, cfg.order))
    return _solve_systems([gs], cfg)


def fit_tvsar(ss: SegmentedSeries, cfg: ModelConfig) -> TvSarResult:
    """Per-segment coefficients sharing one support; rows of ``coefs`` follow segment order."""
    if not isinstance(ss, SegmentedSeries):
        ss = SegmentedSeries.from_segments(ss)
    ss.check_order(cfg.order)
    systems = [gram_from_design(build_design(s, cfg.order)) for s in ss.segments]
    return _solve_systems(systems, cfg)


@dataclass(frozen=True)
class StvSarResult:
    """Two-stage grid fit.

    ``coefs[m, n, g, j]`` is the coefficient of lag ``support[j]`` in cell
    ``(m, n)`` and segment ``g`` (0-based); masked cells hold NaN, as do
    their ``cell_objectives``. ``global_coef`` is the stage-1 vector over all
    ``d`` lags.
    """

    support: tuple[int, ...]
    coefs: np.ndarray
    cell_objectives: np.ndarray
    mask: np.ndarray
    constant_cells: np.ndarray
    global_coef: np.ndarray
    global_objective: float
    stage1_stats: SolveStats
    order: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mask.shape

    def cell_vector(self, m: int, n: int, g: int) -> np.ndarray:
        """Full length-``d`` coefficient vector of one cell (0-based indices)."""
        w = np.zeros(self.order)
        w[lags_to_pos(self.support, self.order)] = self.coefs[m, n, g]
        return w


def _windows(X: np.ndarray, d: int):
    """Design tensor ``(cells, rows, d)`` and targets ``(cells, rows)`` for equal-length cells."""
    T = X.shape[1]
    A = np.lib.stride_tricks.sliding_window_view(X, d, axis=1)[:, : T - d, ::-1]
    return A, X[:, d:]


def _segment_cells(grid: GridSeries, g: int) -> np.ndarray:
    return grid.values[g][grid.mask[:, :, g]]


def grid_gram(grid: GridSeries, order: int) -> GramSystem:
    """Summed Gram system over every unmasked cell and segment."""
    d = order
    P = np.zeros((d, d))
    q = np.zeros(d)
    C = 0.0
    for g in range(grid.shape[2]):
        X = _segment_cells(grid, g)
        if X.shape[0] and X.shape[1] <= d:
            raise ValueError(f"segment {g + 1} has length {X.shape[1]}, which does not exceed order d={d}")
        for lo in range(0, X.shape[0], CELL_CHUNK):
            A, y = _windows(X[lo:lo + CELL_CHUNK], d)
            P += np.tensordot(A, A, axes=([0, 1], [0, 1]))
            q += np.tensordot(A, y, axes=([0, 1], [0, 1]))
            C += float(np.sum(y * y))
    return GramSystem(0.5 * (P + P.T), q, C)


def _restricted_grams(X: np.ndarray, d: int, pos: np.ndarray):
    """Per-cell Gram blocks on the support positions ``pos``."""
    T = X.shape[1]
    y = X[:, d:]
    cols = [X[:, d - 1 - p: T - 1 - p] for p in pos]
    s = len(cols)
    P = np.empty((X.shape[0], s, s))
    q = np.empty((X.shape[0], s))
    for i in range(s):
        q[:, i] = np.einsum("cr,cr->c", cols[i], y)
        for j in range(i, s):
            P[:, i, j] = P[:, j, i] = np.einsum("cr,cr->c", cols[i], cols[j])
    C = np.einsum("cr,cr->c", y, y)
    return P, q, C


def _fit_cells_loop(P, q, C, upper):
    s = q.shape[1]
    w = np.zeros((q.shape[0], s))
    f = np.empty(q.shape[0])
    for c in range(q.shape[0]):
        sol = bvls_nonneg(GramSystem(P[c], q[c], float(C[c])), None, upper)
        w[c], f[c] = sol.w, sol.objective
    return w, f


def _stage2_segment(X, d, pos, upper, n_jobs):
    w = np.zeros((X.shape[0], pos.size))
    f = np.empty(X.shape[0])
    chunks = [(lo, min(X.shape[0], lo + CELL_CHUNK)) for lo in range(0, X.shape[0], CELL_CHUNK)]

    def run(lo, hi):
        P, q, C = _restricted_grams(X[lo:hi], d, pos)
        if pos.size <= BATCH_MAX_SUPPORT:
            return restricted_fit_batch(P, q, C, upper)
        return _fit_cells_loop(P, q, C, upper)

    if n_jobs in (None, 1) or len(chunks) == 1:
        results = [run(lo, hi) for lo, hi in chunks]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(run)(lo, hi) for lo, hi in chunks)
    # results come back in submission order, so slots are filled by index
    for (lo, hi), (wc, fc) in zip(chunks, results):
        w[lo:hi], f[lo:hi] = wc, fc
    return w, f


def stage2_fit(grid: GridSeries, support, order: int, upper: float = 5.0, *, n_jobs: int | None = 1):
    """Refit every unmasked cell with coefficients confined to ``support``.

    Returns ``(coefs, objectives)`` shaped ``(M, N, Gamma, |support|)`` and
    ``(M, N, Gamma)``, NaN where masked. Supports of up to
    ``BATCH_MAX_SUPPORT`` lags are solved in bulk; larger ones cell by cell.
    """
    pos = lags_to_pos(support, order)
    M, N, G = grid.shape
    coefs = np.full((M, N, G, pos.size), np.nan)
    objs = np.full((M, N, G), np.nan)
    for g in range(G):
        X = _segment_cells(grid, g)
        if X.shape[0] == 0:
            continue
        if X.shape[1] <= order:
            raise ValueError(f"segment {g + 1} has length {X.shape[1]}, which does not exceed order d={order}")
        w, f = _stage2_segment(X, order, pos, upper, n_jobs)
        sel = grid.mask[:, :, g]
        coefs[:, :, g][sel] = w
        objs[:, :, g][sel] = f
    return coefs, objs


def fit_stvsar(grid: GridSeries, cfg: ModelConfig) -> StvSarResult:
    """Two-stage grid fit: a global support from the summed system, then per-cell fits on it.

    Stage 1 sums every cell's Gram system and solves the sparse problem once
    with the configured solver. Stage 2 refits each cell independently with
    coefficients confined to the stage-1 support.
    """
    d = cfg.order
    M, N, G = grid.shape
    if not grid.mask.any():
        raise ValueError("grid has no unmasked cells")
    agg = grid_gram(grid, d)
    fit = _solve_systems([agg], cfg)
    w_global = fit.coefs[0]
    support = pos_to_lags(np.flatnonzero(w_global > 0))
    coefs, objs = stage2_fit(grid, support, d, cfg.bigm, n_jobs=cfg.n_jobs)
    constant = np.zeros((M, N, G), dtype=bool)
    for g in range(G):
        X = _segment_cells(grid, g)
        if X.shape[0]:
            constant[:, :, g][grid.mask[:, :, g]] = np.ptp(X, axis=1) == 0

    return StvSarResult(
        support=support,
        coefs=coefs,
        cell_objectives=objs,
        mask=grid.mask.copy(),
        constant_cells=constant,
        global_coef=w_global,
        global_objective=fit.objective,
        stage1_stats=fit.stats,
        order=d,
    )


def evaluate_cells(grid: GridSeries, w) -> np.ndarray:
    """Residual sum of squares of one coefficient vector in every cell; NaN where masked."""
    w = np.asarray(w, dtype=np.float64)
    d = w.size
    M, N, G = grid.shape
    out = np.full((M, N, G), np.nan)
    for g in range(G):
        X = _segment_cells(grid, g)
        if X.shape[0] == 0:
            continue
        vals = np.empty(X.shape[0])
        for lo in range(0, X.shape[0], CELL_CHUNK):
            A, y = _windows(X[lo:lo + CELL_CHUNK], d)
            r = y - A @ w
            vals[lo:lo + CELL_CHUNK] = np.einsum("cr,cr->c", r, r)
        out[:, :, g][grid.mask[:, :, g]] = vals
    return out


def fit_cells_exact(grid: GridSeries, cfg: ModelConfig, max_cells: int = EXACT_MAX_CELLS) -> dict:
    """Independent exact fit per cell, without a shared support.

    Meant for small grids, as an oracle against the two-stage scheme. Returns
    ``{(m, n, g): SparseFit}`` with 0-based keys.
    """
    M, N, G = grid.shape
    if int(grid.mask.sum()) > max_cells:
        raise ValueError(f"per-cell exact mode is limited to {max_cells} cells, grid has {int(grid.mask.sum())}")
    out = {}
    for m in range(M):
        for n in range(N):
            for g in range(G):
                if grid.mask[m, n, g]:
                    out[(m, n, g)] = fit_sar(grid.cell(m, n, g), cfg)
    return out


def seasonality_map(res: StvSarResult, lag: int) -> np.ndarray:
    """``(M, N, Gamma)`` grid of the coefficient at ``lag``; NaN marks masked cells."""
    if lag not in res.support:
        raise ValueError(f"lag {lag} is not in the fitted support {list(res.support)}")
    j = res.support.index(lag)
    out = res.coefs[..., j].copy()
    out[~res.mask] = np.nan
    return out
