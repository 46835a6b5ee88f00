"""Sparse non-negative autoregression for quantifying periodicity.

Fits autoregressions with at most ``tau`` nonzero, non-negative lag
coefficients, exactly by branch-and-bound or greedily by subspace pursuit,
for single series, segmented series (one support shared over segments) and
spatial grids (one global support, per-cell coefficients).
"""

from .core import (
    DesignPair,
    GridSeries,
    ModelConfig,
    SegmentedSeries,
    build_design,
    objective,
    ols_fit,
    segment,
)
from .estimators import SparseAR, STVSparseAR, TVSparseAR
from .greedy import GreedyFit, dvp_candidates, nnsp
from .mio import SolveStats, SparseFit, SupportNode, branch_select, solve_sar, solve_shared_support
from .models import StvSarResult, evaluate_cells, fit_sar, fit_stvsar, fit_tvsar, seasonality_map, stage2_fit
from .qp import (
    BoundedSupportSolution,
    GramSystem,
    bvls_nonneg,
    gram_aggregate,
    gram_from_design,
    restricted_fit,
)

__all__ = [
    "BoundedSupportSolution",
    "DesignPair",
    "GramSystem",
    "GreedyFit",
    "GridSeries",
    "ModelConfig",
    "STVSparseAR",
    "SegmentedSeries",
    "SolveStats",
    "SparseAR",
    "SparseFit",
    "StvSarResult",
    "SupportNode",
    "TVSparseAR",
    "branch_select",
    "build_design",
    "bvls_nonneg",
    "dvp_candidates",
    "evaluate_cells",
    "fit_sar",
    "fit_stvsar",
    "fit_tvsar",
    "gram_aggregate",
    "gram_from_design",
    "nnsp",
    "objective",
    "ols_fit",
    "restricted_fit",
    "seasonality_map",
    "segment",
    "solve_sar",
    "solve_shared_support",
    "stage2_fit",
]

__version__ = "0.1.0"
