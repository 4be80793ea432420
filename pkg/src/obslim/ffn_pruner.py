"""FFN channel pruning with a decaying per-iteration group size.

Channels carry no block constraint, so pruning is plain greedy column
removal; the group schedule trades how often errors are re-estimated
against speed. Selection within a group uses the estimates from the start
of the group, but every removal applies full exact compensation.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import SpdMatrix, invert_spd
from .obs_core import ColumnPruneState, column_errors, prune_column


@dataclass(frozen=True)
class GroupSchedule:
    """Group-size decay: start large, halve after each group, floor at min_size."""

    start_size: int = 1024
    min_size: int = 8

    def __post_init__(self):
        if not 1 <= self.min_size <= self.start_size:
            raise ValueError(
                f"need 1 <= min_size <= start_size, got {self.min_size}, {self.start_size}"
            )


def group_sizes(total_to_prune: int, sched: GroupSchedule) -> list[int]:
    """Emit the per-iteration group sizes for a total removal count.

    The list is non-increasing, sums exactly to ``total_to_prune``, halves
    from ``start_size`` down to ``min_size`` and pads with ``min_size``
    (the last entry truncated to the remainder).
    """
    if total_to_prune < 0:
        raise ValueError(f"total_to_prune must be >= 0, got {total_to_prune}")
    sizes = []
    remaining = total_to_prune
    size = sched.start_size
    while remaining > 0:
        take = min(size, remaining)
        sizes.append(take)
        remaining -= take
        size = max(size // 2, sched.min_size)
    return sizes


def prune_channels(w: np.ndarray, h: SpdMatrix, n_prune: int, sched: GroupSchedule):
    """Remove ``n_prune`` channels (columns) of ``w`` under the group schedule.

    Per group: estimate all column errors once, pick the group's k cheapest
    (ties to the lowest original index), then remove them one by one in
    ascending estimated-error order with exact compensation after each
    removal. Returns ``(pruned_w, kept, step_errors)`` with the kept
    columns in original order.
    """
    w = np.asarray(w, dtype=np.float64)
    if not 0 <= n_prune < w.shape[1]:
        raise ValueError(f"cannot prune {n_prune} of {w.shape[1]} channels")
    state = ColumnPruneState.initial(w, invert_spd(h))
    for k in group_sizes(n_prune, sched):
        cols = np.asarray(state.alive, dtype=np.intp)
        errs = column_errors(state.w[:, cols], state.h_inv)
        order = np.argsort(errs, kind="stable")[:k]
        for orig in cols[order]:
            prune_column(state, state.alive.index(int(orig)))
    kept = list(state.alive)
    return state.w[:, kept], kept, list(state.step_errors)
