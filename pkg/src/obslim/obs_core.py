"""Column-granular pruning with exact second-order compensation.

One column is removed at a time; the remaining columns absorb a closed-form
update that keeps the layer's output reconstruction error at its minimum.
The module also carries the two independent oracles used throughout the
test suite: the closed-form least-squares solution for a fixed column mask
and exhaustive subset search.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import NotSpdError
from .linalg import SpdMatrix, remove_update

# Exhaustive search refuses to enumerate more subsets than this.
ENUMERATION_GUARD = 100_000


@dataclass
class ColumnPruneState:
    """Mutable state for sequential column pruning of one weight matrix.

    ``w`` keeps its full width; pruned columns are zeroed in place so row
    indices of coupled tensors stay stable. ``alive`` lists the original
    column indices still active, in their original relative order, and
    ``h_inv`` is the inverse Hessian restricted to exactly those columns.
    """

    w: np.ndarray
    h_inv: SpdMatrix
    alive: list[int]
    step_errors: list[tuple[int, float]] = field(default_factory=list)

    @classmethod
    def initial(cls, w: np.ndarray, h_inv: SpdMatrix) -> "ColumnPruneState":
        w = np.array(w, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {w.shape}")
        if w.shape[1] != h_inv.n:
            raise ValueError(
                f"weight columns ({w.shape[1]}) != inverse Hessian dim ({h_inv.n})"
            )
        return cls(w=w, h_inv=h_inv, alive=list(range(w.shape[1])))

    @property
    def n_alive(self) -> int:
        return len(self.alive)

    def active_weights(self) -> np.ndarray:
        """Copy of the weight columns still alive, in alive order."""
        return self.w[:, self.alive]


def column_errors(w: np.ndarray, h_inv: SpdMatrix) -> np.ndarray:
    """Pruning error of each column: squared norm over the inverse-Hessian diagonal.

    ``err[p] = sum(w[:, p]**2) / h_inv[p, p]`` is the exact increase of the
    reconstruction objective if column ``p`` alone were removed now.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != h_inv.n:
        raise ValueError(
            f"weight shape {w.shape} inconsistent with inverse Hessian dim {h_inv.n}"
        )
    diag = h_inv.diagonal()
    if np.any(diag <= 0.0):
        raise NotSpdError("non-positive diagonal entry in inverse Hessian")
    return (w * w).sum(axis=0) / diag


def prune_column(state: ColumnPruneState, p: int) -> ColumnPruneState:
    """Remove the column at alive-position ``p`` and compensate the rest.

    The removed column becomes exactly zero; every other active column j
    receives ``-(w_p / h_inv[p, p]) * h_inv[p, j]``. The inverse Hessian is
    downdated in place of a full recomputation, and the step's error is
    appended to ``state.step_errors`` keyed by the original column index.
    """
    if not 0 <= p < state.n_alive:
        raise ValueError(f"position {p} outside alive region of size {state.n_alive}")
    a = state.h_inv.a
    piv = a[p, p]
    if piv <= 0.0:
        raise NotSpdError(f"zero pivot: h_inv[{p},{p}] = {piv}")
    orig = state.alive[p]
    w_col = state.w[:, orig].copy()
    err = float((w_col * w_col).sum() / piv)
    cols = np.asarray(state.alive, dtype=np.intp)
    state.w[:, cols] -= np.outer(w_col / piv, a[p, :])
    state.w[:, orig] = 0.0
    state.h_inv = remove_update(state.h_inv, p)
    state.alive.pop(p)
    state.step_errors.append((orig, err))
    return state


def least_squares_oracle(w: np.ndarray, h: SpdMatrix, kept) -> np.ndarray:
    """Exact minimizer of the reconstruction error for a fixed column mask.

    Returns ``W @ H[:, kept] @ inv(H[kept, kept])``, the unique weights over
    the kept columns minimizing ``||W X - W_hat X[kept]||^2`` for any
    features X with ``X X^T`` proportional to H. Output columns follow the
    order of ``kept``.
    """
    w = np.asarray(w, dtype=np.float64)
    kept = np.asarray(kept, dtype=np.intp)
    if kept.size == 0:
        return np.zeros((w.shape[0], 0))
    h_k = h.a[:, kept]
    h_kk = h.a[np.ix_(kept, kept)]
    try:
        return np.linalg.solve(h_kk, (w @ h_k).T).T
    except np.linalg.LinAlgError as exc:
        raise NotSpdError(f"kept-column submatrix is singular ({exc})") from exc


def mask_residual(w: np.ndarray, h: SpdMatrix, kept) -> float:
    """Reconstruction error of the optimally compensated mask.

    Evaluates ``||W X - W_hat X[kept]||^2`` (with ``H = X X^T``) at the
    least-squares optimum without needing X itself.
    """
    w = np.asarray(w, dtype=np.float64)
    kept = np.asarray(kept, dtype=np.intp)
    total = float(np.einsum("ij,jk,ik->", w, h.a, w))
    if kept.size == 0:
        return total
    w_hat = least_squares_oracle(w, h, kept)
    captured = float(np.einsum("ij,ij->", w_hat, w @ h.a[:, kept]))
    return total - captured


def brute_force_best_columns(w: np.ndarray, h: SpdMatrix, k: int):
    """Exhaustively find the k columns whose removal costs least.

    Returns ``(removed, error)`` where ``removed`` is the lexicographically
    first optimal index tuple and ``error`` the exact residual of the
    optimally compensated complement.

    Raises:
        ValueError: if the number of k-subsets exceeds ``ENUMERATION_GUARD``.
    """
    w = np.asarray(w, dtype=np.float64)
    d = w.shape[1]
    if not 0 <= k <= d:
        raise ValueError(f"cannot remove {k} of {d} columns")
    if math.comb(d, k) > ENUMERATION_GUARD:
        raise ValueError(
            f"enumeration guard exceeded: C({d},{k}) = {math.comb(d, k)} subsets"
        )
    all_cols = np.arange(d)
    best_removed = None
    best_err = np.inf
    for removed in combinations(range(d), k):
        kept = np.setdiff1d(all_cols, removed, assume_unique=True)
        err = mask_residual(w, h, kept)
        if err < best_err:
            best_err = err
            best_removed = removed
    return best_removed, float(best_err)
