"""
Verify
Checkers that turn the sampling guarantees into runnable tests:
spectral (Loewner) sandwiches, lp direction checks, well-conditioned basis
checks and binomial tail tests.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from config import DEFAULT_DIRECTIONS, DIRECTION_ZERO_TOL, NULL_SPACE_TOL, PSD_TOL, RANK_REL_CUTOFF
from errors import ContractViolation, ParameterError
from matrix_core import DenseMatrix, SparseRowMatrix, entrywise_p_norm, gram, sym_eigen, vector_p_norm
from sketch_sampling import RngStream

logger = logging.getLogger(__name__)

# columns of the direction matrix pushed through A at a time
_DIRECTION_BATCH = 128


@dataclass
class SpectralReport:
    """Extreme eigenvalues of B^T B after whitening by A^T A"""
    min_ratio: float
    max_ratio: float
    null_space_leak: float
    passed: bool
    eps_tested: float

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["pass"] = data.pop("passed")
        data["kind"] = "spectral"
        return data


@dataclass
class DirectionReport:
    """Worst ||Bx||_p / ||Ax||_p over the tested directions"""
    directions_tested: int
    worst_low: float
    worst_high: float
    passed: bool
    p: float = 2.0
    eps_tested: float = 0.0
    zero_direction_violations: int = 0

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["pass"] = data.pop("passed")
        data["kind"] = "direction"
        return data


@dataclass
class ConditioningReport:
    """Observed alpha = ||AC||_p (entrywise) and beta = max ||z||_q / ||ACz||_p"""
    alpha_observed: float
    beta_observed: float
    alpha_bound: float
    beta_bound: float
    directions_tested: int
    passed: bool

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["pass"] = data.pop("passed")
        data["kind"] = "conditioning"
        return data


def loewner_check(A: SparseRowMatrix, B: SparseRowMatrix, eps: float) -> SpectralReport:
    """
    Test (1-eps)^2 A^T A <= B^T B <= (1+eps)^2 A^T A.

    Whitens by the range space of A^T A, takes the extreme eigenvalues of
    the whitened B^T B, and measures how much of B falls into the null space
    of A (||B N||_F, tolerance NULL_SPACE_TOL * ||B||_F).
    """
    if A.shape[1] != B.shape[1]:
        raise ContractViolation(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")

    eig = sym_eigen(gram(A), RANK_REL_CUTOFF)
    G_B = gram(B)
    V, N = eig.range_basis, eig.null_basis

    if eig.rank:
        W = V / np.sqrt(eig.eigenvalues[:eig.rank])
        whitened = W.T @ G_B @ W
        ratios = np.linalg.eigvalsh(0.5 * (whitened + whitened.T))
        min_ratio, max_ratio = float(ratios[0]), float(ratios[-1])
    else:
        # vacuous on an empty range space
        min_ratio = max_ratio = 1.0

    # ||B N||_F^2 = trace(N^T B^T B N)
    leak = math.sqrt(max(0.0, float(np.trace(N.T @ G_B @ N)))) if N.shape[1] else 0.0
    b_norm = math.sqrt(max(0.0, float(np.trace(G_B))))

    passed = (
        min_ratio >= (1 - eps) ** 2
        and max_ratio <= (1 + eps) ** 2
        and leak <= NULL_SPACE_TOL * max(b_norm, np.finfo(float).tiny)
    )
    report = SpectralReport(min_ratio, max_ratio, leak, bool(passed), eps)
    logger.debug(f"loewner_check: [{min_ratio:.4f}, {max_ratio:.4f}] leak={leak:.2e} pass={passed}")
    return report


def _directions(d: int, n_dirs: int, rng: RngStream) -> np.ndarray:
    """d x m matrix: Gaussian, sparse random, and all d coordinate directions"""
    gen = rng.generator()
    n_gauss = n_dirs - n_dirs // 2
    n_sparse = n_dirs // 2
    gauss = gen.standard_normal((d, n_gauss))

    support = min(3, d)
    sparse_dirs = np.zeros((d, n_sparse))
    for j in range(n_sparse):
        idx = gen.choice(d, size=support, replace=False)
        sparse_dirs[idx, j] = gen.standard_normal(support)

    return np.hstack([gauss, sparse_dirs, np.eye(d)])


def _column_p_norms(M: SparseRowMatrix, X: np.ndarray, p: float) -> np.ndarray:
    norms = np.empty(X.shape[1])
    for start in range(0, X.shape[1], _DIRECTION_BATCH):
        block = np.asarray(M @ X[:, start:start + _DIRECTION_BATCH])
        norms[start:start + block.shape[1]] = vector_p_norm(block, p, axis=0) if block.shape[0] else 0.0
    return norms


def lp_direction_check(
    A: SparseRowMatrix,
    B: SparseRowMatrix,
    p: float,
    eps: float,
    n_dirs: int = DEFAULT_DIRECTIONS,
    rng: Optional[RngStream] = None,
) -> DirectionReport:
    """
    Sampled-direction check of (1-eps)||Ax||_p <= ||Bx||_p <= (1+eps)||Ax||_p.

    Directions with ||Ax||_p below tolerance are skipped for the ratio but
    then ||Bx||_p must be below tolerance too.
    """
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if n_dirs < 1:
        raise ParameterError(f"n_dirs must be >= 1, got {n_dirs}")
    if A.shape[1] != B.shape[1]:
        raise ContractViolation(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")

    rng = rng or RngStream(0)
    X = _directions(A.shape[1], n_dirs, rng)
    a_norms = _column_p_norms(A, X, p)
    b_norms = _column_p_norms(B, X, p)

    scale = max(float(a_norms.max(initial=0.0)), float(b_norms.max(initial=0.0)), np.finfo(float).tiny)
    zero = a_norms <= DIRECTION_ZERO_TOL * scale
    violations = int(np.sum(b_norms[zero] > DIRECTION_ZERO_TOL * scale))

    ratios = b_norms[~zero] / a_norms[~zero]
    worst_low = float(ratios.min()) if ratios.size else 1.0
    worst_high = float(ratios.max()) if ratios.size else 1.0
    passed = worst_low >= 1 - eps and worst_high <= 1 + eps and violations == 0

    if not passed:
        logger.debug(f"lp_direction_check failed: p={p} range [{worst_low:.4f}, {worst_high:.4f}], "
                     f"{violations} zero-direction violations")
    return DirectionReport(
        directions_tested=X.shape[1],
        worst_low=worst_low,
        worst_high=worst_high,
        passed=bool(passed),
        p=p,
        eps_tested=eps,
        zero_direction_violations=violations,
    )


def tail_test(observed_failures: int, trials: int, bound: float) -> bool:
    """Observed failure rate is at most bound plus 3 binomial standard deviations"""
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    bound = min(max(bound, 0.0), 1.0)
    slack = 3 * math.sqrt(bound * (1 - bound) / trials)
    return observed_failures / trials <= bound + slack


def loewner_leq(X: DenseMatrix, Y: DenseMatrix, tol: float = PSD_TOL) -> bool:
    """X <= Y in the Loewner order, up to tol * max(||X||_2, ||Y||_2)"""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ContractViolation(f"loewner_leq needs equal square matrices, got {X.shape} and {Y.shape}")
    D = Y - X
    lam_min = float(np.linalg.eigvalsh(0.5 * (D + D.T))[0])
    scale = max(np.linalg.norm(X, 2), np.linalg.norm(Y, 2), np.finfo(float).tiny)
    return lam_min >= -tol * scale


def sandwich_check(A: SparseRowMatrix, B: SparseRowMatrix, kappa: float, tol: float = PSD_TOL) -> bool:
    """The approx_str precondition (1/kappa) A^T A <= B^T B <= A^T A"""
    if kappa < 1:
        raise ParameterError(f"kappa must be >= 1, got {kappa}")
    if A.shape[1] != B.shape[1]:
        raise ContractViolation(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")
    G_A, G_B = gram(A), gram(B)
    return loewner_leq(G_A / kappa, G_B, tol) and loewner_leq(G_B, G_A, tol)


def well_conditioned_check(
    A: SparseRowMatrix,
    C: np.ndarray,
    alpha: float,
    beta: float,
    p: float,
    n_dirs: int = DEFAULT_DIRECTIONS,
    rng: Optional[RngStream] = None,
) -> ConditioningReport:
    """
    Check U = AC against an (alpha, beta, p) certificate: ||U||_p <= alpha
    entrywise, and ||z||_q <= beta ||Uz||_p on sampled directions z.
    """
    if A.shape[1] != C.shape[0]:
        raise ContractViolation(f"A has {A.shape[1]} columns, C has {C.shape[0]} rows")
    rng = rng or RngStream(0)
    U = np.asarray(A @ C)
    alpha_observed = entrywise_p_norm(U, p)

    q = math.inf if p == 1 else p / (p - 1)
    Z = _directions(C.shape[1], n_dirs, rng)
    u_norms = vector_p_norm(U @ Z, p, axis=0)
    z_norms = vector_p_norm(Z, q, axis=0)
    live = u_norms > DIRECTION_ZERO_TOL * max(float(u_norms.max(initial=0.0)), np.finfo(float).tiny)
    beta_observed = float(np.max(z_norms[live] / u_norms[live])) if np.any(live) else math.inf

    passed = alpha_observed <= alpha and beta_observed <= beta
    return ConditioningReport(alpha_observed, beta_observed, alpha, beta, Z.shape[1], bool(passed))
