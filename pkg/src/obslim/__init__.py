"""Structured pruning of transformer weight matrices with exact second-order compensation.

The package removes whole attention heads and FFN channels from dense
weight matrices, compensating the surviving weights in closed form from a
calibration Hessian so the layer's output changes as little as possible.
"""

from .calib import HessianAccumulator, hessian_from_features, load_recorded_features
from .config import DEFAULT_DAMPING, TOL, Tolerances
from .errors import ManifestError, NotSpdError, ObslimError, TensorFormatError
from .ffn_pruner import GroupSchedule, group_sizes, prune_channels
from .head_pruner import (
    HeadLayout,
    HeadPruneResult,
    head_errors,
    prune_heads,
    prune_one_head,
    reorder_for_head,
)
from .linalg import (
    GroupedCholesky,
    SpdMatrix,
    cholesky_lower,
    grouped_cholesky,
    invert_spd,
    permute_symmetric,
    remove_update,
)
from .obs_core import (
    ColumnPruneState,
    brute_force_best_columns,
    column_errors,
    least_squares_oracle,
    mask_residual,
    prune_column,
)
from .pipeline import (
    LayerWeights,
    PruneConfig,
    PruneReport,
    ToyModelSpec,
    forward_layer,
    forward_model,
    gen_toy,
    prune_model,
    verify_report,
)
from .schedule import (
    PruneSchedule,
    build_schedule,
    counts_from_ratio,
    ratio_at,
    schedule_ratios,
    solve_last_ratio,
)
from .tensorstore import (
    LayerEntry,
    ModelManifest,
    read_tensor_file,
    validate_manifest,
    write_tensor_file,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnPruneState",
    "DEFAULT_DAMPING",
    "GroupSchedule",
    "GroupedCholesky",
    "HeadLayout",
    "HeadPruneResult",
    "HessianAccumulator",
    "LayerEntry",
    "LayerWeights",
    "ManifestError",
    "ModelManifest",
    "NotSpdError",
    "ObslimError",
    "PruneConfig",
    "PruneReport",
    "PruneSchedule",
    "SpdMatrix",
    "TOL",
    "TensorFormatError",
    "Tolerances",
    "ToyModelSpec",
    "brute_force_best_columns",
    "build_schedule",
    "cholesky_lower",
    "column_errors",
    "counts_from_ratio",
    "forward_layer",
    "forward_model",
    "gen_toy",
    "grouped_cholesky",
    "group_sizes",
    "head_errors",
    "hessian_from_features",
    "invert_spd",
    "least_squares_oracle",
    "load_recorded_features",
    "mask_residual",
    "permute_symmetric",
    "prune_channels",
    "prune_column",
    "prune_heads",
    "prune_model",
    "prune_one_head",
    "ratio_at",
    "read_tensor_file",
    "remove_update",
    "reorder_for_head",
    "schedule_ratios",
    "solve_last_ratio",
    "validate_manifest",
    "verify_report",
    "write_tensor_file",
]
