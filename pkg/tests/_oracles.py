"""Reference solvers that share no code with the package's active-set kernel.

The box QP  min w'Pw - 2q'w + C  s.t. 0 <= w <= M  is solved by face
enumeration: every coordinate is at 0, at M, or free, and the free block
solves its stationarity equations. An extreme point of the optimal set sits
on a face whose free block is nonsingular, so the best feasible face point
is the optimum. Vectorized over a leading batch axis.
"""

from __future__ import annotations

import itertools

import numpy as np

FACE_COND_MAX = 1e12


def design(x, d):
    """Lag matrix and target built row by row, without stride tricks."""
    x = np.asarray(x, dtype=float)
    T = x.size
    A = np.array([[x[t - k] for k in range(1, d + 1)] for t in range(d, T)])
    return A, x[d:].copy()


def gram(x, d):
    A, y = design(x, d)
    return A.T @ A, A.T @ y, float(y @ y)


def box_qp(P, q, C, upper):
    """Optimal value and minimizer of a batch of box QPs.

    ``P`` is ``(n, s, s)``, ``q`` is ``(n, s)``, ``C`` is ``(n,)``. Returns
    ``(f, w)`` with ``f`` of shape ``(n,)`` and ``w`` of shape ``(n, s)``.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    C = np.asarray(C, dtype=float)
    n, s = q.shape
    best_f = C.copy()
    best_w = np.zeros((n, s))
    for pattern in itertools.product((0, 1, 2), repeat=s):
        pattern = np.array(pattern)
        free = np.flatnonzero(pattern == 1)
        w = np.where(pattern == 2, upper, 0.0) * np.ones((n, s))
        if free.size:
            fixed = np.flatnonzero(pattern != 1)
            rhs = q[:, free] - np.einsum("nij,nj->ni", P[:, free][:, :, fixed], w[:, fixed])
            PFF = P[:, free][:, :, free]
            ok = np.linalg.cond(PFF) < FACE_COND_MAX
            sol = np.zeros((n, free.size))
            if ok.any():
                sol[ok] = np.linalg.solve(PFF[ok], rhs[ok][..., None])[..., 0]
            w[:, free] = sol
            ok &= np.all((sol >= 0.0) & (sol <= upper), axis=1)
        else:
            ok = np.ones(n, dtype=bool)
        f = np.einsum("ni,nij,nj->n", w, P, w) - 2.0 * np.einsum("ni,ni->n", q, w) + C
        better = ok & (f < best_f)
        best_f[better] = f[better]
        best_w[better] = w[better]
    return best_f, best_w


def enumerate_supports(systems, tau, upper=5.0, candidates=None):
    """Best shared support of size <= tau by exhaustive search.

    ``systems`` is a list of ``(P, q, C)`` triples sharing one order;
    ``candidates`` holds 1-based lags. Returns ``(f, support, W)``, where
    ``W`` has one full-length row per system.
    """
    d = systems[0][1].size
    pool = range(d) if candidates is None else [k - 1 for k in candidates]
    best_f = sum(C for _, _, C in systems)
    best_supp, best_W = (), np.zeros((len(systems), d))
    for size in range(1, tau + 1):
        supps = np.array(list(itertools.combinations(pool, size)), dtype=int)
        if supps.size == 0:
            continue
        total = np.zeros(len(supps))
        parts = []
        for P, q, C in systems:
            Ps = P[supps[:, :, None], supps[:, None, :]]
            qs = q[supps]
            f, w = box_qp(Ps, qs, np.full(len(supps), C), upper)
            total += f
            parts.append(w)
        i = int(np.argmin(total))
        if total[i] < best_f:
            best_f = float(total[i])
            best_supp = tuple(int(k) + 1 for k in supps[i])
            best_W = np.zeros((len(systems), d))
            for g, w in enumerate(parts):
                best_W[g, supps[i]] = w[i]
    return best_f, best_supp, best_W


def projected_gradient(P, q, upper, allowed, iters=200_000, tol=1e-13):
    """Accelerated projected gradient on the box, zero outside ``allowed`` (0-based)."""
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = np.zeros(q.size, dtype=bool)
    mask[list(allowed)] = True
    L = 2.0 * max(np.linalg.eigvalsh(P).max(), 1e-12)
    w = np.zeros(q.size)
    z = w.copy()
    t = 1.0
    for _ in range(iters):
        g = 2.0 * (P @ z - q)
        w_new = np.where(mask, np.clip(z - g / L, 0.0, upper), 0.0)
        if np.max(np.abs(w_new - w)) < tol:
            w = w_new
            break
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, t = w_new, t_new
    return w


def normal_equations(x, d):
    """Least-squares AR coefficients from (A'A) w = A'y."""
    P, q, _ = gram(x, d)
    return np.linalg.solve(P, q)


def random_series(rng, T, lags, noise, level=1.0):
    """AR recursion with the given {lag: coef}, written independently of the package generator."""
    p = max(lags)
    burn = 10 * p
    x = list(level * rng.uniform(0.5, 1.5, size=p))
    for _ in range(burn + T):
        x.append(sum(c * x[-k] for k, c in lags.items()) + (rng.normal(0.0, noise) if noise else 0.0))
    return np.array(x[-T:])
