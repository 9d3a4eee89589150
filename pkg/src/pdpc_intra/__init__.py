"""HEVC intra prediction with position-dependent prediction combination (PDPC) and its training tools."""

from .core import BlockSize, BlockView, PredictionMode, ReferenceArray, extract_block, finalize
from .intra import SmoothingPolicy, predict_angular, predict_dc, predict_hevc, predict_planar, smooth_refs_121
from .pdpc import ParamLibrary, PdpcParams, predict_pdpc_full, predict_pdpc_shortcut, realize_matrix, size_rule
from .training import (
    ModeStats,
    PredictorMatrix,
    SearchSpec,
    accumulate_stats,
    classify_block,
    fit_multiset,
    fit_params,
    objective,
    solve_optimal,
)

__version__ = "0.1.0"
