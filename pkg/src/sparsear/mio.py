"""Exact branch-and-bound for cardinality-constrained non-negative least squares.

The mixed-integer problem

    min  sum_g f_g(w_g)   s.t.  0 <= w_g <= M z,  sum(z) <= tau,  z binary

is searched over the support indicators ``z``. A node fixes some lags in
(``forced_in``) and some out (``forced_out``). Its bound drops the cardinality
constraint and solves each block's box-constrained problem on the lags not
forced out, which can only lower the minimum. Nodes are explored best bound
first and the search starts from a greedy incumbent.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import lags_to_pos, pos_to_lags
from .greedy import as_gram, nnsp
from .qp import _bvls_positions, gram_aggregate

__all__ = [
    "SparseFit",
    "SolveStats",
    "SupportNode",
    "branch_select",
    "solve_sar",
    "solve_shared_support",
]

TOL_GAP = 1e-8
MAX_NODES = 1_000_000
BOX_SLACK = 1e-6


@dataclass(frozen=True)
class SupportNode:
    forced_in: frozenset[int]
    forced_out: frozenset[int]
    lower_bound: float = -np.inf


@dataclass(frozen=True)
class SolveStats:
    nodes_explored: int
    incumbent_objective: float
    best_bound: float
    gap: float
    wall_time: float
    certified: bool
    qp_solves: int = 0
    qp_uncertified: int = 0
    max_kkt_residual: float = 0.0


@dataclass(frozen=True)
class SparseFit:
    """Sparse fit with one shared support over one or more blocks.

    ``coefs`` has one row per block. ``support`` holds the 1-based lags that
    are nonzero in at least one block. ``box_binding`` warns that some
    coefficient sits at the big-M bound, so the bound may be active.
    """

    coefs: np.ndarray
    support: tuple[int, ...]
    objective: float
    block_objectives: tuple[float, ...]
    stats: SolveStats
    box_binding: bool = False
    nodes: list[SupportNode] | None = field(default=None, repr=False, compare=False)

    @property
    def w(self) -> np.ndarray:
        if self.coefs.shape[0] != 1:
            raise AttributeError("fit has several blocks; use .coefs")
        return self.coefs[0]


def _branch_pos(score: np.ndarray, free: np.ndarray) -> int:
    # argmax takes the first maximum, so ties go to the smaller lag
    return int(free[np.argmax(score[free])])


def branch_select(node: SupportNode, relaxation, candidates: Iterable[int] | None = None) -> int:
    """Lag to branch on: the free lag with the largest relaxed coefficient.

    ``relaxation`` is a coefficient vector, or a ``(blocks, d)`` array whose
    columns are summed. Ties, including all-zero coefficients, go to the
    smallest free lag.
    """
    W = np.atleast_2d(np.asarray(relaxation, dtype=np.float64))
    d = W.shape[1]
    pool = np.arange(d) if candidates is None else lags_to_pos(candidates, d)
    fixed = lags_to_pos(set(node.forced_in) | set(node.forced_out), d)
    free = np.setdiff1d(pool, fixed)
    if free.size == 0:
        raise ValueError("node has no free lag to branch on")
    return _branch_pos(W.sum(axis=0), free) + 1


class _Search:
    def __init__(self, systems, tau, upper):
        self.systems = systems
        self.tau = tau
        self.upper = upper
        self.d = systems[0].order
        self.qp_solves = 0
        self.qp_uncertified = 0
        self.max_kkt = 0.0

    def _solve(self, pos, warm):
        total = 0.0
        W = np.zeros((len(self.systems), self.d))
        objs = []
        for g, gs in enumerate(self.systems):
            sol = _bvls_positions(gs, pos, self.upper, None if warm is None else warm[g])
            self.qp_solves += 1
            if sol.certified:
                self.max_kkt = max(self.max_kkt, sol.kkt_residual)
            else:
                self.qp_uncertified += 1
            W[g] = sol.w
            objs.append(sol.objective)
            total += sol.objective
        return total, W, objs

    def relax(self, allowed, warm=None):
        return self._solve(allowed, warm)

    def exact(self, support):
        """Cold solve on a fixed support; the canonical evaluation of a leaf."""
        return self._solve(np.asarray(sorted(support), dtype=np.int64), None)


def _union_support(W: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.any(W > 0.0, axis=0))


def solve_shared_support(
    systems: Sequence,
    tau: int,
    upper: float = 5.0,
    candidates: Iterable[int] | None = None,
    *,
    max_nodes: int = MAX_NODES,
    tol_gap: float = TOL_GAP,
    greedy_start: bool = True,
    warm_supports: Iterable[Iterable[int]] = (),
    record_nodes: bool = False,
) -> SparseFit:
    """Exact shared-support fit over one or more Gram systems.

    Parameters
    ----------
    systems : sequence of GramSystem or DesignPair
        One per block (segment, cell); all of the same order.
    tau : int
        Maximum number of selected lags.
    upper : float
        Big-M bound on every coefficient.
    candidates : iterable of int, optional
        1-based lags the support may use; all lags when omitted.
    max_nodes : int
        Node budget. When exhausted the incumbent is returned uncertified.
    tol_gap : float
        Absolute optimality gap below which a node is pruned.
    greedy_start : bool
        Seed the incumbent with subspace pursuit on the summed system.
    warm_supports : iterable of lag sets
        Extra incumbent seeds; each must lie inside ``candidates`` and hold
        at most ``tau`` lags.
    record_nodes : bool
        Keep every explored node with its bound on ``fit.nodes``.
    """
    t0 = time.perf_counter()
    systems = [as_gram(s) for s in systems]
    if not systems:
        raise ValueError("need at least one system")
    d = systems[0].order
    if any(s.order != d for s in systems):
        raise ValueError("all systems must share the same order")
    cand = np.arange(d) if candidates is None else lags_to_pos(candidates, d)
    if not 1 <= tau <= cand.size:
        raise ValueError(f"sparsity tau={tau} must lie in 1..{cand.size} (number of candidate lags)")
    if not upper > 0:
        raise ValueError(f"big-M bound must be positive, got {upper}")

    search = _Search(systems, tau, upper)
    # the empty support is always feasible
    best_objs = [float(s.C) for s in systems]
    best_f, best_W = float(sum(best_objs)), np.zeros((len(systems), d))

    def offer(support):
        nonlocal best_f, best_W, best_objs
        f, W, objs = search.exact(support)
        if f < best_f:
            best_f, best_W, best_objs = f, W, objs

    if greedy_start:
        agg = systems[0] if len(systems) == 1 else gram_aggregate(systems)
        seed = nnsp(agg, tau, upper=upper, candidates=pos_to_lags(cand))
        offer(lags_to_pos(seed.selected, d))
    for lags in warm_supports:
        pos = lags_to_pos(lags, d)
        if pos.size > tau or not np.all(np.isin(pos, cand)):
            raise ValueError(f"warm support {pos_to_lags(pos)} is not a feasible support")
        offer(pos)

    counter = itertools.count()
    root_f, root_W, _ = search.relax(cand)
    heap = [(root_f, next(counter), frozenset(), frozenset(), cand, root_W)]
    pruned_bound = np.inf
    explored = 0
    recorded: list[SupportNode] = []
    budget_hit = False

    while heap:
        bound, _, f_in, f_out, allowed, W = heapq.heappop(heap)
        if bound >= best_f - tol_gap:
            pruned_bound = min(pruned_bound, bound)
            continue
        if explored >= max_nodes:
            heapq.heappush(heap, (bound, next(counter), f_in, f_out, allowed, W))
            budget_hit = True
            break
        explored += 1
        if record_nodes:
            recorded.append(SupportNode(frozenset(pos_to_lags(f_in)), frozenset(pos_to_lags(f_out)), bound))

        if len(f_in) == tau:
            offer(f_in)
            continue
        supp = _union_support(W)
        if supp.size <= tau:
            # relaxation is already feasible, so it solves this node exactly
            offer(supp)
            continue

        free = np.setdiff1d(allowed, np.fromiter(f_in, dtype=np.int64, count=len(f_in)))
        k = _branch_pos(W.sum(axis=0), free)

        # forcing k in leaves the relaxation unchanged
        heapq.heappush(heap, (bound, next(counter), f_in | {k}, f_out, allowed, W))
        out_allowed = allowed[allowed != k]
        warm = W.copy()
        warm[:, k] = 0.0
        f_o, W_o, _ = search.relax(out_allowed, warm)
        heapq.heappush(heap, (f_o, next(counter), f_in, f_out | {k}, out_allowed, W_o))

    # canonical answer: cold solve on the incumbent's own support
    supp = _union_support(best_W)
    f, W, objs = search.exact(supp)
    if f <= best_f:
        best_f, best_W, best_objs = f, W, objs

    open_bound = min((item[0] for item in heap), default=np.inf)
    best_bound = min(best_f, pruned_bound, open_bound)
    gap = max(0.0, best_f - best_bound)
    stats = SolveStats(
        nodes_explored=explored,
        incumbent_objective=best_f,
        best_bound=best_bound,
        gap=gap,
        wall_time=time.perf_counter() - t0,
        certified=(not budget_hit) and gap <= tol_gap,
        qp_solves=search.qp_solves,
        qp_uncertified=search.qp_uncertified,
        max_kkt_residual=search.max_kkt,
    )
    return SparseFit(
        coefs=best_W,
        support=pos_to_lags(_union_support(best_W)),
        objective=best_f,
        block_objectives=tuple(best_objs),
        stats=stats,
        box_binding=bool(np.any(best_W >= upper - BOX_SLACK)),
        nodes=recorded if record_nodes else None,
    )


def solve_sar(
    gs,
    tau: int,
    upper: float = 5.0,
    candidates: Iterable[int] | None = None,
    **kwargs,
) -> SparseFit:
    """Exact single-block fit; see :func:`solve_shared_support` for the options."""
    return solve_shared_support([gs], tau, upper, candidates, **kwargs)
