"""Non-negative subspace pursuit and decision-variable pruning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed

from .core import DesignPair, lags_to_pos, pos_to_lags
from .qp import GramSystem, bvls_nonneg, gram_from_design

__all__ = ["GreedyFit", "as_gram", "dvp_candidates", "nnsp"]

TOL_RES = 1e-10


def as_gram(system) -> GramSystem:
    if isinstance(system, GramSystem):
        return system
    if isinstance(system, DesignPair):
        return gram_from_design(system)
    raise TypeError(f"expected a DesignPair or GramSystem, got {type(system).__name__}")


@dataclass(frozen=True)
class GreedyFit:
    """Result of :func:`nnsp`.

    ``selected`` is the pursuit's index set S (1-based lags, at most ``s`` of
    them); the coefficients may be zero on part of it.
    """

    w: np.ndarray
    selected: tuple[int, ...]
    objective: float
    iterations: int
    converged: bool
    certified: bool

    @property
    def support(self) -> tuple[int, ...]:
        return pos_to_lags(np.flatnonzero(self.w > 0))


def _top(values: np.ndarray, positions: np.ndarray, s: int) -> np.ndarray:
    # stable sort on the negated values keeps the smaller lag first on ties
    order = np.argsort(-values, kind="stable")[:s]
    return np.sort(positions[order])


def nnsp(
    system,
    s: int,
    max_iter: int = 50,
    *,
    upper: float = 5.0,
    candidates: Iterable[int] | None = None,
    tol_res: float = TOL_RES,
) -> GreedyFit:
    """Greedy sparse non-negative fit by subspace pursuit.

    Each pass merges the ``s`` lags most correlated with the residual into the
    working set, refits with non-negative (box-capped) least squares, keeps
    the ``s`` largest coefficients and refits on those. The loop ends when the
    working set stops changing, when the relative objective improvement drops
    below ``tol_res``, or after ``max_iter`` passes; the best iterate seen is
    returned.

    ``s`` is the single sparsity level used for both merging and pruning.
    Pass ``tau0`` when screening candidates and ``tau`` for a standalone fit.
    """
    gs = as_gram(system)
    d = gs.order
    cand = np.arange(d) if candidates is None else lags_to_pos(candidates, d)
    if not 1 <= s <= d:
        raise ValueError(f"sparsity s must satisfy 1 <= s <= d={d}, got {s}")
    s = min(s, cand.size)

    w = np.zeros(d)
    f = float(gs.C)
    S = np.empty(0, dtype=np.int64)
    best_w, best_f, best_S = w, f, S
    certified = True
    converged = False
    iterations = 0

    for it in range(1, max_iter + 1):
        corr = np.abs(gs.q - gs.P @ w)
        ell = _top(corr[cand], cand, s)
        if S.size and np.all(np.isin(ell, S)):
            converged = True
            break
        merged = np.union1d(S, ell)
        v = bvls_nonneg(gs, pos_to_lags(merged), upper)
        S_new = _top(v.w[merged], merged, s)
        sol = bvls_nonneg(gs, pos_to_lags(S_new), upper)
        certified &= v.certified and sol.certified
        iterations = it
        if sol.objective < best_f:
            best_w, best_f, best_S = sol.w, sol.objective, S_new
        stable = np.array_equal(S_new, S)
        improvement = (f - sol.objective) / max(abs(f), np.finfo(float).tiny)
        S, w, f = S_new, sol.w, sol.objective
        if stable or improvement < tol_res:
            converged = True
            break

    if best_S.size == 0:
        best_S = S
    return GreedyFit(
        w=best_w,
        selected=pos_to_lags(best_S),
        objective=best_f,
        iterations=iterations,
        converged=converged,
        certified=certified,
    )


def dvp_candidates(
    segments: Sequence,
    tau0: int,
    max_iter: int = 50,
    *,
    upper: float = 5.0,
    n_jobs: int | None = 1,
) -> tuple[int, ...]:
    """Union of the per-segment pursuit sets at sparsity ``tau0`` (1-based lags)."""
    systems = [as_gram(s) for s in segments]
    if not systems:
        raise ValueError("need at least one segment")
    d = systems[0].order
    if any(g.order != d for g in systems):
        raise ValueError("all segments must share the same order")
    if n_jobs in (None, 1) or len(systems) == 1:
        fits = [nnsp(g, tau0, max_iter, upper=upper) for g in systems]
    else:
        fits = Parallel(n_jobs=n_jobs)(
            delayed(nnsp)(g, tau0, max_iter, upper=upper) for g in systems
        )
    union: set[int] = set()
    for fit in fits:
        union.update(fit.selected)
    return tuple(sorted(union))
