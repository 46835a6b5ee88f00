"""CSV ingestion and emission, plus the seeded synthetic-data generator.

All floats are written with 17 significant digits so every file re-parses to
the exact in-memory values. Lag columns use 1-based lag numbers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import GridSeries
from .mio import SparseFit
from .models import StvSarResult

__all__ = [
    "BenchRow",
    "SyntheticSpec",
    "fmt",
    "gen_synthetic",
    "read_bench",
    "read_coef_table",
    "read_grid",
    "read_univariate",
    "write_bench",
    "write_grid",
    "write_seasonality",
    "write_series",
    "write_stv_coefs",
    "write_truth",
    "write_tv_coefs",
]

GRID_HEADER = ("m", "n", "gamma", "t", "value")


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def fmt(v: float) -> str:
    return "%.17g" % v


def _parse_float(text: str):
    try:
        return float(text)
    except ValueError:
        return None


def _data_lines(path):
    """Yield ``(line_number, fields)`` skipping ``#`` comments and trailing blank lines."""
    with open(path, newline="") as fh:
        rows = list(enumerate(csv.reader(fh), start=1))
    while rows and not any(c.strip() for c in rows[-1][1]):
        rows.pop()
    for lineno, row in rows:
        if row and row[0].lstrip().startswith("#"):
            continue
        yield lineno, [c.strip() for c in row]


def read_univariate(path, column: str | int | None = None) -> np.ndarray:
    """Read one column of a CSV file as a finite series.

    ``column`` is a header name, a 0-based position, or None for the last
    column. A header row is recognised when the selected cell of the first
    row is not a number.
    """
    rows = list(_data_lines(path))
    if not rows:
        raise InputError(f"{path}: file is empty")
    first_no, first = rows[0]
    header = None
    if isinstance(column, str):
        if column not in first:
            raise InputError(f"{path}: no column named {column!r} in header {first}")
        idx = first.index(column)
        header = first
    else:
        idx = -1 if column is None else int(column)
        try:
            cell = first[idx]
        except IndexError:
            raise InputError(f"{path}: line {first_no} has no column {column}") from None
        if _parse_float(cell) is None:
            header = first
    body = rows[1:] if header is not None else rows
    if not body:
        raise InputError(f"{path}: no data rows")
    out = np.empty(len(body))
    for i, (lineno, row) in enumerate(body):
        try:
            cell = row[idx]
        except IndexError:
            raise InputError(f"{path}: row {lineno} has no column {column}") from None
        v = _parse_float(cell) if cell else None
        if v is None or not math.isfinite(v):
            raise InputError(f"{path}: row {lineno} has a missing or non-finite value {cell!r}")
        out[i] = v
    return out


def write_series(path, x) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,value\n")
        for t, v in enumerate(np.asarray(x, dtype=np.float64), start=1):
            fh.write(f"{t},{fmt(v)}\n")


def read_grid(path) -> GridSeries:
    """Read a long-format ``m,n,gamma,t,value`` CSV into a dense, masked grid."""
    rows = list(_data_lines(path))
    if not rows:
        raise InputError(f"{path}: file is empty")
    hdr_no, hdr = rows[0]
    if tuple(h.lower() for h in hdr) != GRID_HEADER:
        raise InputError(f"{path}: line {hdr_no}: expected header {','.join(GRID_HEADER)}, got {','.join(hdr)}")
    cells: dict[tuple[int, int, int], dict[int, float]] = {}
    for lineno, row in rows[1:]:
        if len(row) != 5:
            raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected 5")
        try:
            m, n, g, t = (int(c) for c in row[:4])
        except ValueError:
            raise InputError(f"{path}: row {lineno} has non-integer indices {row[:4]}") from None
        if min(m, n, g, t) < 1:
            raise InputError(f"{path}: row {lineno}: indices are 1-based, got {row[:4]}")
        v = _parse_float(row[4]) if row[4] else None
        if v is None or not math.isfinite(v):
            raise InputError(f"{path}: row {lineno} has a missing or non-finite value {row[4]!r}")
        series = cells.setdefault((m, n, g), {})
        if t in series:
            raise InputError(f"{path}: row {lineno} duplicates key (m={m}, n={n}, gamma={g}, t={t})")
        series[t] = v
    if not cells:
        raise InputError(f"{path}: no data rows")

    M = max(k[0] for k in cells)
    N = max(k[1] for k in cells)
    G = max(k[2] for k in cells)
    T = [0] * G
    for (m, n, g), series in cells.items():
        T[g - 1] = max(T[g - 1], max(series))
    for key in sorted(cells):
        series = cells[key]
        if len(series) != T[key[2] - 1]:
            missing = sorted(set(range(1, T[key[2] - 1] + 1)) - set(series))
            raise InputError(
                f"{path}: cell (m={key[0]}, n={key[1]}, gamma={key[2]}) is ragged: "
                f"missing t={missing[:5]} of 1..{T[key[2] - 1]}"
            )
    values = tuple(np.full((M, N, T[g]), np.nan) for g in range(G))
    mask = np.zeros((M, N, G), dtype=bool)
    for (m, n, g), series in cells.items():
        values[g - 1][m - 1, n - 1] = [series[t] for t in range(1, T[g - 1] + 1)]
        mask[m - 1, n - 1, g - 1] = True
    return GridSeries(values, mask)


def write_grid(path, grid: GridSeries) -> None:
    M, N, G = grid.shape
    with open(path, "w", newline="") as fh:
        fh.write(",".join(GRID_HEADER) + "\n")
        for m in range(M):
            for n in range(N):
                for g in range(G):
                    if not grid.mask[m, n, g]:
                        continue
                    for t, v in enumerate(grid.values[g][m, n], start=1):
                        fh.write(f"{m + 1},{n + 1},{g + 1},{t},{fmt(v)}\n")


def _omega_line(support) -> str:
    return "# omega=" + ",".join(str(k) for k in support) + "\n"


def write_tv_coefs(path, fit: SparseFit) -> None:
    """``gamma,k,w`` rows for the nonzero coefficients of each block."""
    with open(path, "w", newline="") as fh:
        fh.write(_omega_line(fit.support))
        fh.write("gamma,k,w\n")
        for g, row in enumerate(fit.coefs, start=1):
            for p in np.flatnonzero(row):
                fh.write(f"{g},{p + 1},{fmt(row[p])}\n")


def write_stv_coefs(path, res: StvSarResult) -> None:
    """``m,n,gamma,k,w`` rows for every unmasked cell and every support lag."""
    M, N, G = res.shape
    with open(path, "w", newline="") as fh:
        fh.write(_omega_line(res.support))
        fh.write("m,n,gamma,k,w\n")
        for m in range(M):
            for n in range(N):
                for g in range(G):
                    if not res.mask[m, n, g]:
                        continue
                    for j, k in enumerate(res.support):
                        fh.write(f"{m + 1},{n + 1},{g + 1},{k},{fmt(res.coefs[m, n, g, j])}\n")


def write_seasonality(path, grid_map: np.ndarray, lag: int) -> None:
    """``m,n,gamma,value`` for one lag; masked cells are written as ``nan``."""
    M, N, G = grid_map.shape
    with open(path, "w", newline="") as fh:
        fh.write(f"# k={lag}\n")
        fh.write("m,n,gamma,value\n")
        for m in range(M):
            for n in range(N):
                for g in range(G):
                    fh.write(f"{m + 1},{n + 1},{g + 1},{fmt(grid_map[m, n, g])}\n")


def read_coef_table(path) -> tuple[dict[str, str], list[str], list[list[float]]]:
    """Parse any table written by this module: ``(comments, header, rows)``."""
    comments: dict[str, str] = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            comments[key.strip()] = val.strip()
        elif line:
            body.append(line)
    header = body[0].split(",")
    rows = [[float(c) for c in line.split(",")] for line in body[1:]]
    return comments, header, rows


@dataclass(frozen=True)
class BenchRow:
    dataset: str
    order: int
    tau: int
    solver: str
    objective: float
    wall_time: float
    certified: bool


BENCH_HEADER = ("dataset", "order", "tau", "solver", "objective", "wall_time", "certified")


def write_bench(path, rows: Iterable[BenchRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for r in rows:
            w.writerow([r.dataset, r.order, r.tau, r.solver, fmt(r.objective), fmt(r.wall_time), int(r.certified)])


def read_bench(path) -> list[BenchRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            BenchRow(
                r["dataset"], int(r["order"]), int(r["tau"]), r["solver"],
                float(r["objective"]), float(r["wall_time"]), bool(int(r["certified"])),
            )
            for r in reader
        ]


def _check_lags(lags: Mapping[int, float], what: str) -> None:
    if not lags:
        raise ValueError(f"{what}: at least one planted lag is required")
    for k, c in lags.items():
        if int(k) != k or k < 1:
            raise ValueError(f"{what}: lags must be positive integers, got {k}")
        if not (c >= 0 and math.isfinite(c)):
            raise ValueError(f"{what}: coefficients must be finite and non-negative, got {c} at lag {k}")
    total = float(sum(lags.values()))
    if total > 1.0 + 1e-12:
        raise ValueError(f"{what}: coefficients sum to {total:.6g} > 1; the recursion would be unstable")


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted sparse AR generator settings.

    ``grid`` is ``(M, N, Gamma)``; every cell and segment is simulated
    independently with ``length`` points. ``overrides`` maps 1-based
    ``(m, n)`` cells to their own lag coefficients. The first ``max lag``
    values are drawn from ``level * U(0.5, 1.5)``.
    """

    length: int
    lags: Mapping[int, float]
    noise: float = 0.0
    seed: int = 0
    grid: tuple[int, int, int] | None = None
    overrides: Mapping[tuple[int, int], Mapping[int, float]] = field(default_factory=dict)
    level: float = 1.0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"length must be positive, got {self.length}")
        if not self.noise >= 0:
            raise ValueError(f"noise must be non-negative, got {self.noise}")
        _check_lags(self.lags, "lags")
        for cell, lags in self.overrides.items():
            _check_lags(lags, f"override {cell}")
        if self.grid is not None and (len(self.grid) != 3 or min(self.grid) < 1):
            raise ValueError(f"grid must be three positive sizes (M, N, Gamma), got {self.grid}")


def _simulate(coefs: np.ndarray, T: int, noise: float, level: float, rng) -> np.ndarray:
    """Run the recursion for every row of ``coefs`` (cells x max lag)."""
    n, p = coefs.shape
    burn = 10 * p
    total = p + burn + T
    x = np.empty((n, total))
    x[:, :p] = level * rng.uniform(0.5, 1.5, size=(n, p))
    eps = rng.normal(0.0, noise, size=(n, total)) if noise > 0 else np.zeros((n, total))
    active = np.flatnonzero(np.any(coefs != 0, axis=0))
    c = coefs[:, active]
    lags = active + 1
    for t in range(p, total):
        x[:, t] = np.einsum("ij,ij->i", c, x[:, t - lags]) + eps[:, t]
    return x[:, total - T:]


def gen_synthetic(spec: SyntheticSpec):
    """Series (or GridSeries when ``spec.grid`` is set) from the planted recursion."""
    rng = np.random.default_rng(spec.seed)
    all_lags = set(spec.lags)
    for lags in spec.overrides.values():
        all_lags |= set(lags)
    p = int(max(all_lags))

    def row(lags):
        v = np.zeros(p)
        for k, c in lags.items():
            v[int(k) - 1] = c
        return v

    if spec.grid is None:
        return _simulate(row(spec.lags)[None, :], spec.length, spec.noise, spec.level, rng)[0]
    M, N, G = spec.grid
    base = row(spec.lags)
    coefs = np.tile(base, (M * N, 1))
    for (m, n), lags in spec.overrides.items():
        if not (1 <= m <= M and 1 <= n <= N):
            raise ValueError(f"override cell {(m, n)} lies outside the {M}x{N} grid")
        coefs[(m - 1) * N + (n - 1)] = row(lags)
    coefs = np.repeat(coefs, G, axis=0)
    X = _simulate(coefs, spec.length, spec.noise, spec.level, rng).reshape(M, N, G, spec.length)
    return GridSeries.from_array(X)


def write_truth(path, spec: SyntheticSpec) -> None:
    """JSON sidecar with the planted lags, for test harnesses."""
    doc = asdict(spec)
    doc["lags"] = {str(k): v for k, v in sorted(spec.lags.items())}
    doc["overrides"] = {
        f"{m},{n}": {str(k): v for k, v in sorted(lags.items())}
        for (m, n), lags in sorted(spec.overrides.items())
    }
    doc["grid"] = list(spec.grid) if spec.grid else None
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
