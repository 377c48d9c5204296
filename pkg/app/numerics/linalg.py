"""
Sketch application kernels, orthonormalization and small symmetric eigenproblems.

Dense matrices are float64 numpy arrays, sparse ones scipy CSR matrices.
Trace powers are always taken from eigenvalues or singular values, never by repeated products.
"""
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.linalg
from scipy import sparse

from app.services.errors import NumericError, RankError, ShapeError
from .sketches import GaussianSketch, OsnapSketch, Sketch, sketch_as_csc


logger = logging.getLogger(__name__)

ORTHONORMAL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class OrthonormalBasis:
    U: np.ndarray  # (n, d), U^T U = I

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    def __post_init__(self):
        check_finite(self.U, "orthonormal basis")
        gram = self.U.T @ self.U
        deviation = np.max(np.abs(gram - np.eye(self.U.shape[1])))
        if deviation > ORTHONORMAL_TOLERANCE:
            raise NumericError(f"Columns are not orthonormal: max |U^T U - I| = {deviation:.3e}")


def as_dense(A) -> np.ndarray:
    if sparse.issparse(A):
        return A.toarray().astype(np.float64)
    array = np.asarray(A, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2:
        raise ShapeError(f"Expected a matrix, got an array with {array.ndim} dimensions")
    return array


def check_finite(A, label: str = "matrix"):
    values = A.data if sparse.issparse(A) else A
    if not np.all(np.isfinite(values)):
        raise NumericError(f"The {label} has non-finite entries")


def _check_rows(sk: Sketch, rows: int):
    if sk.spec.n != rows:
        raise ShapeError(f"Sketch has n={sk.spec.n} columns but the matrix has {rows} rows")


def apply_sketch_dense(sk: Sketch, A: np.ndarray) -> np.ndarray:
    """
    Pi @ A for a dense A. For OSNAP this scatters the n*s nonzeros of Pi, cost s*n*d.
    """
    A = as_dense(A)
    _check_rows(sk, A.shape[0])
    if isinstance(sk, GaussianSketch):
        return sk.matrix @ A
    return np.asarray(sketch_as_csc(sk) @ A)


def apply_sketch_sparse(sk: OsnapSketch, A: sparse.spmatrix) -> np.ndarray:
    """
    Pi @ A for a CSR A, cost s*nnz(A). Returns a dense m x d array.
    """
    if not sparse.issparse(A):
        raise ShapeError("apply_sketch_sparse expects a scipy sparse matrix")
    _check_rows(sk, A.shape[0])
    if isinstance(sk, GaussianSketch):
        return np.asarray(sk.matrix @ A)
    product = sketch_as_csc(sk) @ A.tocsr()
    return product.toarray()


def apply_sketch(sk: Sketch, A) -> np.ndarray:
    if sparse.issparse(A) and isinstance(sk, OsnapSketch):
        return apply_sketch_sparse(sk, A)
    return apply_sketch_dense(sk, A)


def numerical_rank(R: np.ndarray, shape: Tuple[int, int]) -> int:
    diagonal = np.abs(np.diag(R))
    if diagonal.size == 0 or diagonal.max() == 0.0:
        return 0
    tolerance = max(shape) * np.finfo(np.float64).eps * diagonal.max()
    return int(np.sum(diagonal > tolerance))


def orthonormalize(A) -> OrthonormalBasis:
    A = as_dense(A)
    check_finite(A, "input matrix")
    rows, cols = A.shape
    if rows < cols:
        raise ShapeError(f"Cannot orthonormalize {cols} columns in dimension {rows}")
    Q, R = scipy.linalg.qr(A, mode="economic")
    rank = numerical_rank(R, A.shape)
    if rank < cols:
        raise RankError(f"Input has numerical rank {rank} < {cols} columns")
    # Fix signs so that R has a positive diagonal
    Q = Q * np.sign(np.diag(R))
    return OrthonormalBasis(U=Q)


def gram_extreme_singular_values(B: np.ndarray) -> Tuple[float, float]:
    B = as_dense(B)
    check_finite(B, "sketched matrix")
    rows, cols = B.shape
    if rows < cols:
        raise ShapeError(f"Expected a tall matrix (m >= d), got {rows} x {cols}")
    eigenvalues = np.linalg.eigvalsh(B.T @ B)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return float(np.sqrt(eigenvalues[0])), float(np.sqrt(eigenvalues[-1]))


def _check_square(M: np.ndarray) -> np.ndarray:
    M = as_dense(M)
    check_finite(M)
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"Expected a square matrix, got {M.shape[0]} x {M.shape[1]}")
    return M


def normalized_trace_power(M: np.ndarray, q: int) -> float:
    """
    tr(M^(2q)) = (1/d) * sum_i lambda_i^(2q) for symmetric M.
    """
    M = _check_square(M)
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * max(1.0, np.max(np.abs(M)))):
        raise ShapeError("normalized_trace_power expects a symmetric matrix")
    return float(np.mean(np.linalg.eigvalsh(M) ** (2 * q)))


def normalized_trace_abs_power(M: np.ndarray, q: int) -> float:
    """
    tr(|M|^(2q)) = (1/d) * sum_i sigma_i^(2q), with |M| = sqrt(M^T M).
    """
    M = _check_square(M)
    return float(np.mean(np.linalg.svd(M, compute_uv=False) ** (2 * q)))


def batched_trace_power(stack: np.ndarray, q: int) -> np.ndarray:
    # stack: (batch, d, d) symmetric
    return np.mean(np.linalg.eigvalsh(stack) ** (2 * q), axis=-1)


def batched_trace_abs_power(stack: np.ndarray, q: int) -> np.ndarray:
    return np.mean(np.linalg.svd(stack, compute_uv=False) ** (2 * q), axis=-1)
