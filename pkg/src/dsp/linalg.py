"""Complex dense matrix helpers and the SVD-based Moore-Penrose pseudoinverse.

Every function accepts a single matrix of shape (rows, cols) or a stack of
matrices of shape (..., rows, cols); per-frequency-bin stacks are the common case.
"""

from typing import Optional

import numpy as np
import numpy.typing as npt

from src.core.exceptions import ContractViolationError, NumericalError

ComplexMatrix = npt.NDArray[np.complex128]

EPS = np.finfo(np.float64).eps


def as_complex_matrix(m: npt.ArrayLike, name: str = "matrix") -> ComplexMatrix:
    """Coerce to a finite complex128 array with at least two dimensions.

    Raises:
        ContractViolationError: If the input is not a matrix or holds NaN/Inf
    """
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim < 2:
        raise ContractViolationError(f"{name} must have at least 2 dimensions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolationError(f"{name} contains non-finite entries")
    return arr


def default_tolerance(rows: int, cols: int) -> float:
    """Rank-revealing cutoff relative to the largest singular value."""
    return max(rows, cols) * EPS


def conj_transpose(m: npt.ArrayLike) -> ComplexMatrix:
    """Conjugate transpose of the last two axes."""
    arr = as_complex_matrix(m)
    return np.conj(np.swapaxes(arr, -1, -2))


def matmul(a: npt.ArrayLike, b: npt.ArrayLike) -> ComplexMatrix:
    """Complex matrix product.

    Raises:
        ContractViolationError: If inner dimensions disagree
    """
    a = as_complex_matrix(a, "left operand")
    b = as_complex_matrix(b, "right operand")
    if a.shape[-1] != b.shape[-2]:
        raise ContractViolationError(f"Cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def pseudoinverse(
    m: npt.ArrayLike,
    rel_tolerance: Optional[float] = None,
    context: str = "",
) -> ComplexMatrix:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``rel_tolerance * sigma_max`` (per matrix) are treated
    as zero.

    Args:
        m: Matrix or stack of matrices, shape (..., rows, cols)
        rel_tolerance: Relative cutoff; defaults to max(rows, cols) * eps
        context: Text added to error messages (e.g. the frequency bin)

    Returns:
        Pseudoinverse with shape (..., cols, rows)

    Raises:
        ContractViolationError: For empty input or a negative tolerance
        NumericalError: If the SVD does not converge
    """
    arr = as_complex_matrix(m)
    rows, cols = arr.shape[-2:]
    if rows == 0 or cols == 0:
        raise ContractViolationError(f"Cannot pseudo-invert an empty matrix of shape {arr.shape}")
    if rel_tolerance is None:
        rel_tolerance = default_tolerance(rows, cols)
    if rel_tolerance < 0:
        raise ContractViolationError(f"rel_tolerance must be >= 0, got {rel_tolerance}")

    try:
        u, s, vh = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as e:
        where = f" ({context})" if context else ""
        raise NumericalError(f"SVD did not converge for matrix of shape {arr.shape}{where}") from e

    cutoff = rel_tolerance * s[..., :1]
    keep = s > cutoff
    s_inv = np.divide(1.0, s, out=np.zeros_like(s), where=keep)
    v = np.conj(np.swapaxes(vh, -1, -2))
    uh = np.conj(np.swapaxes(u, -1, -2))
    return (v * s_inv[..., np.newaxis, :]) @ uh


def frobenius_relative(residual: npt.ArrayLike, reference: npt.ArrayLike) -> np.ndarray:
    """Per-matrix ||residual||_F / ||reference||_F over the last two axes."""
    num = np.linalg.norm(np.asarray(residual), axis=(-2, -1))
    den = np.linalg.norm(np.asarray(reference), axis=(-2, -1))
    return num / np.where(den > 0, den, 1.0)
