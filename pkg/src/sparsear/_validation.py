"""Input checks shared by the estimator classes."""

from __future__ import annotations

import numbers

import numpy as np

from .core import GridSeries, SegmentedSeries, as_series, segment


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_series(X, order: int) -> np.ndarray:
    x = as_series(X, name="X")
    if x.size <= order:
        raise ValueError(f"X has {x.size} observations; order d={order} needs more than {order}")
    return x


def check_segments(X, segment_length: int | None, order: int) -> SegmentedSeries:
    """Accept a SegmentedSeries, a list of series, or one series plus a segment length."""
    if isinstance(X, SegmentedSeries):
        ss = X
    elif segment_length is not None:
        ss = segment(X, segment_length)
    elif isinstance(X, (list, tuple)):
        ss = SegmentedSeries.from_segments(X)
    else:
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 2:
            ss = SegmentedSeries.from_segments(list(arr))
        else:
            ss = SegmentedSeries.from_segments([arr])
    ss.check_order(order)
    return ss


def check_grid(X) -> GridSeries:
    if isinstance(X, GridSeries):
        return X
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"X must be a GridSeries or an (M, N, Gamma, T) array, got shape {arr.shape}")
    return GridSeries.from_array(arr, mask=np.all(np.isfinite(arr), axis=3))
