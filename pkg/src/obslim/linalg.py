"""Dense symmetric-positive-definite linear algebra.

Everything the pruning kernels need from an SPD matrix lives here:
Cholesky factorization, Cholesky-based inversion, symmetric permutation,
per-block (grouped) factorization of diagonal blocks, and the rank-one
downdate that removes one row/column from an inverse without refactoring.

All operations are pure: inputs are never mutated and identical inputs
produce bit-identical outputs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .config import TOL
from .errors import NotSpdError


class SpdMatrix:
    """A symmetric positive-definite matrix in float64.

    The constructor symmetrizes its input as (M + M^T)/2 after checking
    that the asymmetry is within ``TOL.symmetry`` relative to the largest
    entry. Positive definiteness is enforced where a factorization is
    actually taken (`cholesky_lower`, `invert_spd`), which raise
    ``NotSpdError`` on failure.
    """

    __slots__ = ("a",)

    def __init__(self, data):
        a = np.asarray(data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix contains non-finite entries")
        scale = max(1.0, float(np.abs(a).max()))
        asym = float(np.abs(a - a.T).max())
        if asym > TOL.symmetry * scale:
            raise ValueError(
                f"matrix is not symmetric: max asymmetry {asym:.3e} "
                f"exceeds {TOL.symmetry:.0e} relative tolerance"
            )
        self.a = (a + a.T) / 2.0

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.diag(self.a)

    def submatrix(self, idx) -> "SpdMatrix":
        """Principal submatrix on the given index sequence."""
        idx = np.asarray(idx, dtype=np.intp)
        return SpdMatrix(self.a[np.ix_(idx, idx)])

    def __repr__(self):
        return f"SpdMatrix(n={self.n})"


@dataclass(frozen=True)
class GroupedCholesky:
    """Stack of lower-triangular factors, one per diagonal block.

    ``factors[k]`` is the Cholesky factor of block ``k`` of the source
    matrix, so ``factors[k] @ factors[k].T`` reconstructs that block.
    """

    factors: np.ndarray  # (n_blocks, group_size, group_size)
    group_size: int

    @property
    def n_blocks(self) -> int:
        return self.factors.shape[0]

    def diagonals(self) -> np.ndarray:
        """Diagonal entries of every factor, shape (n_blocks, group_size)."""
        return self.factors.diagonal(axis1=1, axis2=2)


def cholesky_lower(m: SpdMatrix) -> np.ndarray:
    """Lower-triangular L with L @ L.T == m.

    Raises:
        NotSpdError: if the matrix is not positive definite.
    """
    try:
        return np.linalg.cholesky(m.a)
    except np.linalg.LinAlgError as exc:
        raise NotSpdError(f"not SPD: Cholesky failed ({exc})") from exc


def invert_spd(m: SpdMatrix) -> SpdMatrix:
    """Inverse of an SPD matrix via its Cholesky factor.

    Raises:
        NotSpdError: if the matrix is not positive definite.
    """
    low = cholesky_lower(m)
    low_inv = solve_triangular(low, np.eye(m.n), lower=True, check_finite=False)
    return SpdMatrix(low_inv.T @ low_inv)


def permute_symmetric(m: SpdMatrix, perm) -> SpdMatrix:
    """Apply the same permutation to rows and columns.

    ``result[i, j] == m[perm[i], perm[j]]``; symmetry is preserved exactly.
    """
    p = np.asarray(perm, dtype=np.intp)
    if p.shape != (m.n,) or not np.array_equal(np.sort(p), np.arange(m.n)):
        raise ValueError("perm must be a bijection on 0..n-1")
    return SpdMatrix(m.a[np.ix_(p, p)])


def grouped_cholesky(h_inv: SpdMatrix, group_size: int) -> GroupedCholesky:
    """Factor every ``group_size`` diagonal block of ``h_inv`` independently.

    The blocks are factored as a batch; the result does not depend on the
    order in which blocks are processed.

    Raises:
        ValueError: if the dimension is not divisible by ``group_size``.
        NotSpdError: if any diagonal block is not positive definite.
    """
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    n = h_inv.n
    if n % group_size != 0:
        raise ValueError(f"dimension {n} not divisible by group size {group_size}")
    k = n // group_size
    blocks = h_inv.a.reshape(k, group_size, k, group_size)
    diag_blocks = blocks[np.arange(k), :, np.arange(k), :]
    try:
        factors = np.linalg.cholesky(diag_blocks)
    except np.linalg.LinAlgError as exc:
        raise NotSpdError(f"not SPD: a diagonal block failed Cholesky ({exc})") from exc
    return GroupedCholesky(factors=factors, group_size=group_size)


def remove_update(h_inv: SpdMatrix, p: int) -> SpdMatrix:
    """Inverse Hessian after deleting row/column ``p`` of the Hessian.

    Computes ``h_inv - h_inv[:, p] h_inv[p, :] / h_inv[p, p]`` with row and
    column ``p`` dropped, which equals the direct inverse of the deleted
    Hessian without refactoring it.

    Raises:
        NotSpdError: if the pivot ``h_inv[p, p]`` is not strictly positive.
    """
    a = h_inv.a
    n = h_inv.n
    if not 0 <= p < n:
        raise ValueError(f"index {p} out of range for dimension {n}")
    piv = a[p, p]
    if piv <= 0.0:
        raise NotSpdError(f"zero pivot: h_inv[{p},{p}] = {piv}")
    adj = a - np.outer(a[:, p], a[p, :]) / piv
    keep = np.arange(n) != p
    return SpdMatrix(adj[np.ix_(keep, keep)])
