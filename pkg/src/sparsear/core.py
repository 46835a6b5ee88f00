"""Time-series containers, segmentation, lagged design matrices and OLS.

Indexing convention
-------------------
Lags are 1-based everywhere they are *named*: support sets, candidate sets,
CSV columns and reports all use lag numbers ``k = 1..d``. Coefficient vectors
are ordinary 0-based numpy arrays, so the coefficient of lag ``k`` lives at
``w[k - 1]``. The helpers :func:`lags_to_pos` and :func:`pos_to_lags` are the
only places the two are converted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SOLVERS",
    "DesignPair",
    "GridSeries",
    "ModelConfig",
    "SegmentedSeries",
    "as_series",
    "build_design",
    "lags_to_pos",
    "objective",
    "ols_fit",
    "pos_to_lags",
    "segment",
]

SOLVERS = ("nnsp", "mio", "mio-dvp")


def lags_to_pos(lags: Iterable[int], order: int) -> np.ndarray:
    """Convert 1-based lag numbers to sorted, unique 0-based positions."""
    pos = np.unique(np.asarray(list(lags), dtype=np.int64)) - 1
    if pos.size and (pos[0] < 0 or pos[-1] >= order):
        raise ValueError(f"lags must lie in 1..{order}, got {sorted(p + 1 for p in pos)}")
    return pos


def pos_to_lags(pos: Iterable[int]) -> tuple[int, ...]:
    return tuple(int(p) + 1 for p in sorted(pos))


def as_series(x, name: str = "series") -> np.ndarray:
    """Validate a univariate series: 1-D, non-empty, finite, float64."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise ValueError(f"{name} contains a non-finite value at position {bad[0] + 1}")
    return arr


@dataclass(frozen=True)
class DesignPair:
    """Lagged regression system ``x_tilde ~ A @ w``.

    Row ``i`` of ``A`` holds the reversed window ``x[d+i-1], ..., x[i]``
    (0-based), i.e. column ``k-1`` is the lag-``k`` regressor.
    """

    A: np.ndarray
    target: np.ndarray

    @property
    def order(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


def build_design(x, order: int) -> DesignPair:
    x = as_series(x)
    d = int(order)
    T = x.size
    if d < 1:
        raise ValueError(f"order must be a positive integer, got {order}")
    if T <= d:
        raise ValueError(f"series length T={T} must exceed the order d={d}")
    windows = np.lib.stride_tricks.sliding_window_view(x, d)[: T - d]
    A = np.ascontiguousarray(windows[:, ::-1])
    A.flags.writeable = False
    target = x[d:].copy()
    target.flags.writeable = False
    return DesignPair(A, target)


def ols_fit(dp: DesignPair) -> np.ndarray:
    """Dense least-squares coefficients; minimum-norm when ``A`` is rank deficient."""
    w, *_ = np.linalg.lstsq(dp.A, dp.target, rcond=None)
    return w


def objective(dp: DesignPair, w) -> float:
    """Residual sum of squares ``||x_tilde - A w||^2``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (dp.order,):
        raise ValueError(f"coefficient vector must have length {dp.order}, got {w.shape}")
    r = dp.target - dp.A @ w
    return float(r @ r)


@dataclass(frozen=True)
class SegmentedSeries:
    segments: tuple[np.ndarray, ...]
    dropped: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(s.size for s in self.segments)

    @classmethod
    def from_segments(cls, segments: Sequence) -> "SegmentedSeries":
        segs = tuple(as_series(s, name=f"segment {i + 1}") for i, s in enumerate(segments))
        if not segs:
            raise ValueError("at least one segment is required")
        return cls(segs)

    def check_order(self, order: int) -> None:
        for g, s in enumerate(self.segments, start=1):
            if s.size <= order:
                raise ValueError(f"segment {g} has length {s.size}, which does not exceed order d={order}")

    def concatenate(self) -> np.ndarray:
        return np.concatenate(self.segments + (self.dropped,))


def segment(x, length: int) -> SegmentedSeries:
    """Split ``x`` into contiguous, non-overlapping segments of ``length``.

    The trailing remainder shorter than ``length`` is kept in ``dropped``.
    """
    x = as_series(x)
    L = int(length)
    if L <= 0:
        raise ValueError(f"segment length must be positive, got {length}")
    n = x.size // L
    if n == 0:
        raise ValueError(f"series of length {x.size} is shorter than one segment of length {L}")
    segs = tuple(x[g * L:(g + 1) * L].copy() for g in range(n))
    return SegmentedSeries(segs, x[n * L:].copy())


@dataclass(frozen=True)
class GridSeries:
    """Cell series ``x[m, n, gamma]`` over an M x N grid and Gamma segments.

    ``values[g]`` is an ``(M, N, T_g)`` array for segment ``g`` (0-based);
    ``mask[m, n, g]`` is True where the cell series is present.
    """

    values: tuple[np.ndarray, ...]
    mask: np.ndarray

    def __post_init__(self):
        if not self.values:
            raise ValueError("grid needs at least one segment")
        M, N = self.values[0].shape[:2]
        if self.mask.shape != (M, N, len(self.values)):
            raise ValueError(f"mask shape {self.mask.shape} does not match grid {(M, N, len(self.values))}")
        for g, v in enumerate(self.values):
            if v.ndim != 3 or v.shape[:2] != (M, N):
                raise ValueError(f"segment {g + 1} has shape {v.shape}, expected ({M}, {N}, T)")
            present = v[self.mask[:, :, g]]
            if present.size and not np.all(np.isfinite(present)):
                raise ValueError(f"segment {g + 1} has non-finite values in unmasked cells")

    @classmethod
    def from_array(cls, values, mask=None) -> "GridSeries":
        """Build from an ``(M, N, Gamma, T)`` array (equal segment lengths)."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError(f"expected an (M, N, Gamma, T) array, got shape {arr.shape}")
        if mask is None:
            mask = np.ones(arr.shape[:3], dtype=bool)
        segs = tuple(np.ascontiguousarray(arr[:, :, g, :]) for g in range(arr.shape[2]))
        return cls(segs, np.asarray(mask, dtype=bool))

    @property
    def shape(self) -> tuple[int, int, int]:
        M, N = self.values[0].shape[:2]
        return M, N, len(self.values)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(v.shape[2] for v in self.values)

    def cell(self, m: int, n: int, g: int) -> np.ndarray:
        """Series of cell (m, n, g), 0-based indices."""
        if not self.mask[m, n, g]:
            raise KeyError(f"cell ({m + 1}, {n + 1}, {g + 1}) is masked")
        return self.values[g][m, n]


@dataclass(frozen=True)
class ModelConfig:
    order: int
    sparsity: int
    solver: str = "mio"
    bigm: float = 5.0
    tau0: int | None = None
    max_nodes: int = 1_000_000
    max_iter: int = 50
    n_jobs: int = 1

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if not 1 <= self.sparsity <= self.order:
            raise ValueError(f"sparsity must satisfy 1 <= tau <= d={self.order}, got {self.sparsity}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not self.bigm > 0:
            raise ValueError(f"big-M bound must be positive, got {self.bigm}")
        if self.solver == "mio-dvp":
            if self.tau0 is None:
                raise ValueError("solver 'mio-dvp' needs a pruning level tau0")
            if not self.sparsity < self.tau0 <= self.order:
                raise ValueError(
                    f"tau0 must satisfy tau={self.sparsity} < tau0 <= d={self.order}, got {self.tau0}"
                )
