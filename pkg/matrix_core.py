"""
Matrix Core
Sparse row storage, Gram products, symmetric eigendecompositions and
pseudoinverse square-root factors used by every pipeline.
"""
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from config import GRAM_CHUNK_ROWS, MAX_DENSE_DIM, PSD_TOL, RANK_REL_CUTOFF, SYMMETRY_TOL
from errors import CapacityError, ContractViolation, NotPSDError, NumericalError, ParameterError

logger = logging.getLogger(__name__)

# CSR with sorted indices, summed duplicates and no stored zeros
SparseRowMatrix = sp.csr_matrix
DenseMatrix = np.ndarray


@dataclass(frozen=True)
class SymmetricEigen:
    """Spectral data of a symmetric matrix, eigenvalues sorted descending"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # orthonormal columns
    rank: int

    @property
    def range_basis(self) -> np.ndarray:
        return self.eigenvectors[:, :self.rank]

    @property
    def null_basis(self) -> np.ndarray:
        return self.eigenvectors[:, self.rank:]


def as_row_matrix(data: Union[np.ndarray, sp.spmatrix, list], n_cols: int = None) -> SparseRowMatrix:
    """
    Canonicalize any 2-D input into a SparseRowMatrix.

    Duplicate column indices are summed, explicit zeros dropped and column
    indices sorted within each row.
    """
    if sp.issparse(data):
        mat = sp.csr_matrix(data, dtype=np.float64, copy=True)
    else:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, n_cols if n_cols else arr.size)
        if arr.ndim != 2:
            raise ContractViolation(f"expected a 2-D matrix, got shape {arr.shape}")
        mat = sp.csr_matrix(arr)
    if n_cols is not None and mat.shape[1] != n_cols:
        raise ContractViolation(f"expected {n_cols} columns, got {mat.shape[1]}")
    if mat.nnz and not np.all(np.isfinite(mat.data)):
        raise ContractViolation("matrix has non-finite entries")
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def empty_rows(n_cols: int) -> SparseRowMatrix:
    return sp.csr_matrix((0, n_cols), dtype=np.float64)


def scale_rows(A: SparseRowMatrix, scales: np.ndarray) -> SparseRowMatrix:
    """Return diag(scales) @ A in CSR form"""
    return as_row_matrix(sp.diags(np.asarray(scales, dtype=np.float64)) @ A)


def check_capacity(d: int):
    if d > MAX_DENSE_DIM:
        raise CapacityError(f"d = {d} exceeds dense cap MAX_DENSE_DIM = {MAX_DENSE_DIM}")


def gram(A: SparseRowMatrix) -> DenseMatrix:
    """
    Compute A^T A as a dense symmetric d x d matrix.

    Rows are densified in chunks of GRAM_CHUNK_ROWS; partial products are
    accumulated in extended precision and rounded once at the end.
    """
    n, d = A.shape
    if d < 1:
        raise ContractViolation("gram needs at least one column")
    check_capacity(d)

    acc = np.zeros((d, d), dtype=np.longdouble)
    for start in range(0, n, GRAM_CHUNK_ROWS):
        block = A[start:start + GRAM_CHUNK_ROWS]
        if block.nnz == 0:
            continue
        partial = block.T @ block
        acc += partial.toarray() if sp.issparse(partial) else partial

    G = np.asarray(acc, dtype=np.float64)
    return 0.5 * (G + G.T)


def sym_eigen(M: DenseMatrix, rel_cutoff: float = RANK_REL_CUTOFF) -> SymmetricEigen:
    """
    Full eigendecomposition of a symmetric matrix.

    Args:
        M: Symmetric d x d matrix
        rel_cutoff: Eigenvalues above rel_cutoff * lambda_max count toward rank

    Returns:
        SymmetricEigen with eigenvalues sorted descending
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolation(f"sym_eigen needs a square matrix, got {M.shape}")
    check_capacity(M.shape[0])

    scale = np.linalg.norm(M)
    if np.linalg.norm(M - M.T) > SYMMETRY_TOL * max(scale, 1.0):
        raise ContractViolation("sym_eigen input is not symmetric")

    try:
        values, vectors = np.linalg.eigh(0.5 * (M + M.T))
    except np.linalg.LinAlgError as e:
        # LAPACK syevd does not report its sweep count
        raise NumericalError(f"eigendecomposition did not converge: {e}", iterations=None) from e

    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]

    lam_max = values[0] if values.size else 0.0
    rank = int(np.sum(values > rel_cutoff * lam_max)) if lam_max > 0 else 0
    return SymmetricEigen(eigenvalues=values, eigenvectors=vectors, rank=rank)


def pinv_sqrt_factor(M: DenseMatrix, rel_cutoff: float = RANK_REL_CUTOFF) -> DenseMatrix:
    """
    Factor C (d x r) with C C^T = M^+ for a PSD matrix M.

    C = V_r diag(lambda_r^{-1/2}); U = A C then has near-orthonormal columns
    whenever M approximates A^T A. Call sites that need the r x d orientation
    use C.T.
    """
    eig = sym_eigen(M, rel_cutoff)
    lam_max = eig.eigenvalues[0] if eig.eigenvalues.size else 0.0
    lam_min = eig.eigenvalues[-1] if eig.eigenvalues.size else 0.0
    if lam_min < -PSD_TOL * max(abs(lam_max), np.finfo(float).tiny):
        raise NotPSDError(f"matrix is not PSD: lambda_min = {lam_min:.3e}, lambda_max = {lam_max:.3e}")

    r = eig.rank
    return eig.eigenvectors[:, :r] / np.sqrt(eig.eigenvalues[:r])


def vector_p_norm(x: np.ndarray, p: float, axis=None) -> Union[float, np.ndarray]:
    """p-norm of a vector (or of each slice along axis)"""
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    return np.linalg.norm(x, ord=p, axis=axis) if axis is not None else float(np.linalg.norm(np.ravel(x), ord=p))


def entrywise_p_norm(M: Union[SparseRowMatrix, DenseMatrix], p: float) -> float:
    """(sum_ij |M_ij|^p)^(1/p), treating the matrix as one long vector"""
    data = M.data if sp.issparse(M) else np.ravel(np.asarray(M, dtype=np.float64))
    if data.size == 0:
        return 0.0
    value = vector_p_norm(data, p)
    if not np.isfinite(value):
        raise NumericalError(f"entrywise {p}-norm overflowed")
    return value


def row_nnz(A: SparseRowMatrix) -> np.ndarray:
    return np.diff(A.indptr)
