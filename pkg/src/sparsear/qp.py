"""Gram-form quadratic systems and the bounded non-negative least-squares kernel.

Every solver in the package minimises

    f(w) = w' P w - 2 w' q + C,    0 <= w_k <= M on an allowed lag set,

which is ``||x_tilde - A w||^2`` written through its sufficient statistics
``P = A'A``, ``q = A'x_tilde`` and ``C = x_tilde'x_tilde``. Systems from many
designs (segments, grid cells) combine by plain summation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import DesignPair, lags_to_pos, pos_to_lags

__all__ = [
    "TOL_KKT",
    "BoundedSupportSolution",
    "GramSystem",
    "bvls_nonneg",
    "gram_aggregate",
    "gram_from_design",
    "restricted_fit",
    "restricted_fit_batch",
]

TOL_KKT = 1e-9


@dataclass(frozen=True)
class GramSystem:
    P: np.ndarray
    q: np.ndarray
    C: float

    @property
    def order(self) -> int:
        return self.q.shape[0]

    def value(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.P @ w - 2.0 * (w @ self.q) + self.C)

    def kkt_scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.q), initial=0.0)))


@dataclass(frozen=True)
class BoundedSupportSolution:
    """Solution of the box-constrained problem on an allowed lag set.

    ``support`` lists the 1-based lags with a strictly positive coefficient.
    ``kkt_residual`` is the worst KKT violation of ``P w - q`` divided by
    ``max(1, ||q||_inf)``; ``certified`` means it is within ``TOL_KKT`` and
    the active-set loop finished inside its iteration cap.
    """

    w: np.ndarray
    support: tuple[int, ...]
    objective: float
    kkt_residual: float
    certified: bool
    changes: int = 0


def gram_from_design(dp: DesignPair) -> GramSystem:
    A, y = dp.A, dp.target
    P = A.T @ A
    P = 0.5 * (P + P.T)
    return GramSystem(P, A.T @ y, float(y @ y))


def gram_aggregate(systems: Sequence[GramSystem]) -> GramSystem:
    systems = list(systems)
    if not systems:
        raise ValueError("cannot aggregate an empty list of systems")
    d = systems[0].order
    for i, s in enumerate(systems):
        if s.order != d:
            raise ValueError(f"system {i} has order {s.order}, expected {d}")
    P = np.sum([s.P for s in systems], axis=0)
    q = np.sum([s.q for s in systems], axis=0)
    C = float(np.sum([s.C for s in systems]))
    return GramSystem(P, q, C)


def _solve_sym(P: np.ndarray, b: np.ndarray):
    """Solve ``P x = b`` for a PSD block.

    Returns ``(x, r)``. When ``P`` is singular, ``x`` is the minimum-norm
    least-squares solution and ``r`` the part of ``b`` outside the range of
    ``P`` (zero when the system is consistent). ``r`` lies in the null space
    of ``P``, so ``f`` falls linearly along it.
    """
    n = b.shape[0]
    if n == 1:
        p = P[0, 0]
        if p > 0:
            return b / p, np.zeros(1)
        return np.zeros(1), b.copy()
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        L = None
    if L is not None:
        diag = np.diag(L)
        if diag.min() ** 2 > 1e3 * np.finfo(float).eps * n * max(np.max(np.diag(P)), 1e-300):
            z = np.linalg.solve(L, b)
            return np.linalg.solve(L.T, z), np.zeros(n)
    x = np.linalg.lstsq(P, b, rcond=None)[0]
    r = b - P @ x
    scale = np.abs(b).max() + np.abs(P).max() * np.abs(x).max()
    if np.abs(r).max() <= 1e-9 * max(scale, 1e-300):
        r = np.zeros(n)
    return x, r


def _kkt_residual(g: np.ndarray, x: np.ndarray, upper: float, scale: float) -> float:
    at_lower = x <= 0.0
    at_upper = x >= upper
    inner = ~(at_lower | at_upper)
    viol = np.zeros_like(g)
    viol[at_lower] = np.maximum(0.0, -g[at_lower])
    viol[at_upper] = np.maximum(0.0, g[at_upper])
    viol[inner] = np.abs(g[inner])
    return max(0.0, float(viol.max(initial=0.0))) / scale


def _subspace_min(P, q, upper, x, state) -> int:
    """Minimise over the free coordinates, stepping back onto bounds as needed.

    Each pass removes at least one coordinate from the free set, so the loop
    ends after at most ``|free|`` passes. Returns the number of bound hits.
    """
    hits = 0
    while True:
        F = np.flatnonzero(state == 1)
        if F.size == 0:
            return hits
        U = np.flatnonzero(state == 2)
        rhs = q[F] - P[np.ix_(F, U)] @ x[U] if U.size else q[F]
        z, r = _solve_sym(P[np.ix_(F, F)], rhs)
        if r.any():
            # no minimiser on this face: slide along r until a bound stops it
            xf = x[F]
            step = np.full(F.size, np.inf)
            with np.errstate(divide="ignore"):
                step[r < 0] = xf[r < 0] / -r[r < 0]
                step[r > 0] = (upper - xf[r > 0]) / r[r > 0]
            t = float(step.min())
            if not np.isfinite(t):
                raise ValueError("objective is unbounded below on the feasible set")
            x[F] = np.clip(xf + t * r, 0.0, upper)
            for j in np.flatnonzero(step <= t):
                k = F[j]
                state[k] = 0 if r[j] < 0 else 2
                x[k] = 0.0 if r[j] < 0 else upper
                hits += 1
            continue
        low = z <= 0.0
        high = z >= upper
        if not (low.any() or high.any()):
            x[F] = z
            return hits
        xf = x[F]
        alpha = np.full(F.size, np.inf)
        with np.errstate(invalid="ignore", divide="ignore"):
            alpha[low] = xf[low] / (xf[low] - z[low])
            alpha[high] = (upper - xf[high]) / (z[high] - xf[high])
        alpha[np.isnan(alpha)] = 0.0
        a = float(alpha.min())
        x[F] = xf + a * (z - xf)
        for j in np.flatnonzero(alpha <= a):
            k = F[j]
            state[k] = 0 if low[j] else 2
            x[k] = 0.0 if low[j] else upper
            hits += 1


def _bvls_reduced(P, q, upper, x, scale, tol, cap):
    """Active-set loop on an already-restricted system. Returns (x, changes, capped)."""
    n = q.shape[0]
    # 0 = at lower bound, 1 = free, 2 = at upper bound
    state = np.where(x <= 0.0, 0, np.where(x >= upper, 2, 1))
    x = np.where(state == 0, 0.0, np.where(state == 2, upper, x))
    changes = _subspace_min(P, q, upper, x, state)
    blocked = np.zeros(n, dtype=bool)
    thresh = tol * scale
    while changes <= cap:
        g = P @ x - q
        viol = np.zeros(n)
        lo = (state == 0) & ~blocked
        hi = (state == 2) & ~blocked
        viol[lo] = -g[lo]
        viol[hi] = g[hi]
        # argmax returns the first maximum: ties enter at the smallest lag
        j = int(np.argmax(viol))
        if viol[j] <= thresh:
            return x, changes, False
        prev = x.copy()
        state[j] = 1
        changes += 1 + _subspace_min(P, q, upper, x, state)
        if state[j] != 1 and np.array_equal(x, prev):
            # entering variable fell straight back onto its bound
            blocked[j] = True
        else:
            blocked[:] = False
    return x, changes, True


def bvls_nonneg(
    gs: GramSystem,
    allowed: Iterable[int] | None = None,
    upper: float = 5.0,
    *,
    w0=None,
    tol: float = TOL_KKT,
    max_changes: int | None = None,
) -> BoundedSupportSolution:
    """Minimise ``f(w)`` over ``0 <= w <= upper`` with ``w`` zero off ``allowed``.

    Parameters
    ----------
    gs : GramSystem
    allowed : iterable of int, optional
        1-based lags that may be nonzero; all lags when omitted.
    upper : float
        Common upper bound; ``np.inf`` gives plain non-negative least squares.
    w0 : array, optional
        Warm start (full length ``d``); clipped into the feasible box.
    tol : float
        KKT tolerance on ``P w - q``, relative to ``max(1, ||q||_inf)``.
    max_changes : int, optional
        Active-set change cap, default ``10 * d``.
    """
    d = gs.order
    pos = np.arange(d) if allowed is None else lags_to_pos(allowed, d)
    if not upper > 0:
        raise ValueError(f"upper bound must be positive, got {upper}")
    return _bvls_positions(gs, pos, upper, w0, tol, max_changes)


def _bvls_positions(gs, pos, upper, w0=None, tol=TOL_KKT, max_changes=None) -> BoundedSupportSolution:
    d = gs.order
    cap = 10 * d if max_changes is None else int(max_changes)
    scale = gs.kkt_scale()
    w = np.zeros(d)
    if pos.size == 0:
        return BoundedSupportSolution(w, (), float(gs.C), 0.0, True, 0)

    Pr = gs.P[np.ix_(pos, pos)]
    qr = gs.q[pos]
    if w0 is None:
        x = np.zeros(pos.size)
    else:
        x = np.clip(np.asarray(w0, dtype=np.float64)[pos], 0.0, upper)
    x, changes, capped = _bvls_reduced(Pr, qr, upper, x, scale, tol, cap)
    w[pos] = x
    kkt = _kkt_residual(Pr @ x - qr, x, upper, scale)
    return BoundedSupportSolution(
        w=w,
        support=pos_to_lags(pos[x > 0.0]),
        objective=gs.value(w),
        kkt_residual=kkt,
        certified=(not capped) and kkt <= tol,
        changes=changes,
    )


def restricted_fit(gs: GramSystem, support: Iterable[int], upper: float = 5.0) -> BoundedSupportSolution:
    """Fit with coefficients confined to ``support``; every other lag is exactly zero."""
    return bvls_nonneg(gs, allowed=tuple(support), upper=upper)


def restricted_fit_batch(P, q, C, upper: float = 5.0, *, chunk: int = 65536):
    """Solve many small box-constrained systems that share one support.

    Parameters
    ----------
    P : array, shape (n, s, s)
        Gram blocks restricted to the support.
    q : array, shape (n, s)
    C : array, shape (n,)
    upper : float

    Returns
    -------
    w : array, shape (n, s)
    objective : array, shape (n,)

    Notes
    -----
    Each coordinate is at its lower bound, free, or at its upper bound at the
    optimum. All ``3**s`` patterns are solved in bulk and the feasible pattern
    with the least objective is kept, which is exact for convex problems. A
    pattern whose free block is singular falls back to the pseudo-inverse.
    """
    P = np.asarray(P, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    n, s = q.shape
    if s > 6:
        raise ValueError(f"batched kernel handles supports up to 6 lags, got {s}")
    w_out = np.zeros((n, s))
    f_out = C.copy()
    if s == 0 or n == 0:
        return w_out, f_out
    patterns = [p for p in itertools.product((0, 1, 2), repeat=s) if any(p)]
    finite_upper = np.isfinite(upper)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        Pc, qc, Cc = P[lo:hi], q[lo:hi], C[lo:hi]
        best_w = np.zeros((hi - lo, s))
        best_f = Cc.copy()
        for pat in patterns:
            pat = np.asarray(pat)
            if not finite_upper and np.any(pat == 2):
                continue
            F = np.flatnonzero(pat == 1)
            U = np.flatnonzero(pat == 2)
            x = np.zeros((hi - lo, s))
            if U.size:
                x[:, U] = upper
            if F.size:
                rhs = qc[:, F]
                if U.size:
                    rhs = rhs - upper * Pc[:, F][:, :, U].sum(axis=2)
                PFF = Pc[:, F][:, :, F]
                z = _batched_solve(PFF, rhs)
                x[:, F] = z
                ok = np.all(z > 0.0, axis=1)
                if finite_upper:
                    ok &= np.all(z < upper, axis=1)
            else:
                ok = np.ones(hi - lo, dtype=bool)
            f = np.einsum("ni,nij,nj->n", x, Pc, x) - 2.0 * np.einsum("ni,ni->n", x, qc) + Cc
            better = ok & (f < best_f)
            best_f[better] = f[better]
            best_w[better] = x[better]
        w_out[lo:hi] = best_w
        f_out[lo:hi] = best_f
    return w_out, f_out


def _batched_solve(PFF: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    f = rhs.shape[1]
    if f == 1:
        p = PFF[:, 0, 0]
        out = np.zeros_like(rhs)
        nz = p > 0
        out[nz, 0] = rhs[nz, 0] / p[nz]
        return out
    diag = np.einsum("nii->n", PFF)
    det = np.linalg.det(PFF)
    good = np.abs(det) > 1e-12 * np.maximum(diag, 1e-300) ** f
    out = np.empty_like(rhs)
    if good.any():
        out[good] = np.linalg.solve(PFF[good], rhs[good][..., None])[..., 0]
    if (~good).any():
        out[~good] = (np.linalg.pinv(PFF[~good]) @ rhs[~good][..., None])[..., 0]
    return out
