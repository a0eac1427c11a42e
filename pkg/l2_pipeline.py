"""
L2 Pipeline
(R, k)-Gaussian block reduction and the iterative l2 row sampler
(reduce forward, recover leverage upper bounds backward).
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from config import (
    C_JL, C_SAMPLE, C_SCALE, DEFAULT_DELTA, DEFAULT_THETA,
    MIN_REDUCTION_RATE, RANK_REL_CUTOFF,
)
from errors import ContractViolation, ParameterError
from matrix_core import SparseRowMatrix, as_row_matrix, empty_rows, gram, pinv_sqrt_factor
from sketch_sampling import (
    RngStream, SampledMatrix, ScoreVector, approx_str, oversample_probs, sample,
)

logger = logging.getLogger(__name__)

# child stream ids
_FORWARD, _ESTIMATE, _SAMPLE, _FINAL_ESTIMATE, _FINAL_SAMPLE = 1, 2, 3, 4, 5


@dataclass
class PipelineConfig:
    """Tunable constants for row_sample_l2 (defaults from config.py)"""
    eps: float = 0.5
    delta: float = DEFAULT_DELTA
    R: Optional[int] = None      # reduction rate; None -> max(8, round(d^theta))
    k: Optional[int] = None      # rows per block; None -> max(4, ceil(4/theta_eff))
    theta: float = DEFAULT_THETA
    c_jl: float = C_JL
    c_sample: float = C_SAMPLE
    c_scale: float = C_SCALE
    rel_cutoff: float = RANK_REL_CUTOFF
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.R is not None and self.R < MIN_REDUCTION_RATE:
            raise ParameterError(f"R must be >= {MIN_REDUCTION_RATE} (e^2 rounded up), got {self.R}")
        if self.k is not None and self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.theta <= 0:
            raise ParameterError(f"theta must be positive, got {self.theta}")

    def with_overrides(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)

    def reduction_rate(self, d: int) -> int:
        if self.R is not None:
            return self.R
        return max(MIN_REDUCTION_RATE, round(d ** self.theta))

    def rows_per_block(self, d: int, R: int) -> int:
        if self.k is not None:
            k = self.k
        else:
            theta_eff = math.log(R) / math.log(max(d, 2))
            k = max(4, math.ceil(4 / theta_eff))
        if k >= R:
            logger.debug(f"k={k} >= R={R}; clamping to R-1 so levels shrink")
            k = R - 1
        return k


@dataclass
class ReductionLadder:
    """A(0) ... A(L) with the row -> block maps between consecutive levels"""
    levels: List[SparseRowMatrix]
    R: int
    k: int
    block_maps: List[np.ndarray] = field(default_factory=list)  # block_maps[l-1]: row of A(l-1) -> block

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    def sizes(self) -> List[int]:
        return [lvl.shape[0] for lvl in self.levels]


def reduce_rk(A: SparseRowMatrix, R: int, k: int, rng: RngStream) -> Tuple[SparseRowMatrix, np.ndarray]:
    """
    (R, k)-projection: pad A with zero rows to a multiple of R and replace
    each block A_(b) of R rows by U_(b) A_(b), U_(b) a k x R standard Gaussian.

    Returns:
        (A', block_map) with A' of ceil(n/R) * k rows and block_map[i] = i // R
    """
    if R < 1 or k < 1:
        raise ParameterError(f"R and k must be >= 1, got R={R}, k={k}")
    n, d = A.shape
    n_blocks = math.ceil(n / R)
    block_map = np.arange(n) // R
    if n_blocks == 0:
        return empty_rows(d), block_map

    U = rng.generator().standard_normal((n_blocks, k, R))
    b = np.arange(n_blocks)[:, None, None]
    rows = np.broadcast_to(b * k + np.arange(k)[None, :, None], U.shape)
    cols = np.broadcast_to(b * R + np.arange(R)[None, None, :], U.shape)
    # columns past n multiply the zero padding rows
    live = cols < n
    U_blocks = sp.csr_matrix((U[live], (rows[live], cols[live])), shape=(n_blocks * k, n))
    return as_row_matrix(U_blocks @ A), block_map


def build_ladder(A: SparseRowMatrix, L: int, R: int, k: int, rng: RngStream) -> ReductionLadder:
    ladder = ReductionLadder(levels=[A], R=R, k=k)
    for level in range(1, L + 1):
        reduced, block_map = reduce_rk(ladder.levels[-1], R, k, rng.child(_FORWARD, level))
        ladder.levels.append(reduced)
        ladder.block_maps.append(block_map)
    return ladder


def ladder_depth(n: int, d: int, R: int) -> int:
    """L = max(0, ceil(log_R(n / d)))"""
    if n <= d:
        return 0
    return max(0, math.ceil(math.log(n / d) / math.log(R) - 1e-12))


def leverage_upper_bounds(
    A_hi: SparseRowMatrix,
    B_hi: SparseRowMatrix,
    block_map: np.ndarray,
    R: int,
    k: int,
    cfg: PipelineConfig,
    rng: RngStream,
) -> ScoreVector:
    """
    Leverage upper bounds for the rows of A(l-1), recovered from A(l) and its
    sparsifier B(l). Stretches of A(l) are estimated against sqrt(2/3) B(l)
    (kappa = 3); every row of block b gets c_scale R^3 ln d times the total
    estimate of that block's k reduced rows.
    """
    d = A_hi.shape[1]
    est = approx_str(A_hi, math.sqrt(2.0 / 3.0) * B_hi, kappa=3, rho=R, delta=cfg.delta,
                     rng=rng, c_jl=cfg.c_jl, rel_cutoff=cfg.rel_cutoff)
    multiplier = cfg.c_scale * R ** 3 * math.log(d)
    block_totals = (multiplier * est.values).reshape(A_hi.shape[0] // k, k).sum(axis=1)
    return ScoreVector(block_totals[block_map], kind="stretch-estimate")


def row_sample_l2(A: SparseRowMatrix, cfg: PipelineConfig, rng: Optional[RngStream] = None) -> SampledMatrix:
    """
    Row sampling using projections.

    Builds A(1..L) by (R, k)-projections, then walks back down: stretch upper
    bounds of A(l) w.r.t. the sparsifier B(l) give leverage upper bounds for
    A(l-1) by summing over blocks, which drive B(l-1) <- Sample(A(l-1)).
    The result is a final sample of B(0) at eps/3; provenance refers to rows of A.

    Returns:
        SampledMatrix with (1 - eps)||Ax|| <= ||Bx|| <= (1 + eps)||Ax|| w.h.p.
    """
    rng = rng or RngStream(cfg.seed)
    n, d = A.shape
    if d < 2:
        raise ContractViolation(f"row_sample_l2 needs d >= 2, got d={d}")
    if n == 0:
        logger.warning("⚠️ row_sample_l2 called on an empty matrix")
        return SampledMatrix(empty_rows(d), np.zeros(0), np.zeros(0), warnings=["empty input"])

    R = cfg.reduction_rate(d)
    k = cfg.rows_per_block(d, R)
    L = ladder_depth(n, d, R)
    eps_levels = [cfg.eps / 3] + [0.5] * L

    ladder = build_ladder(A, L, R, k, rng)
    logger.info(f"📉 l2 ladder: R={R} k={k} L={L} sizes={ladder.sizes()}")

    B = ladder.levels[L]
    history = [B.shape[0]]
    B0 = SampledMatrix.identity(A) if L == 0 else None

    for level in range(L, 0, -1):
        A_hi, A_lo = ladder.levels[level], ladder.levels[level - 1]
        upper = leverage_upper_bounds(A_hi, B, ladder.block_maps[level - 1], R, k, cfg,
                                      rng.child(_ESTIMATE, level))

        probs = oversample_probs(upper, eps_levels[level], d, cfg.c_sample)
        sampled = sample(A_lo, probs, 2.0, rng.child(_SAMPLE, level))
        B = sampled.matrix
        history.append(B.shape[0])
        if level == 1:
            B0 = sampled
        logger.debug(f"level {level}: ||tau~||_1={upper.total:.3g}, B({level - 1}) has {B.shape[0]} rows")

    # approx_str needs rho >= e^2
    final_est = approx_str(B0.matrix, B0.matrix, kappa=2, rho=math.e ** 2, delta=cfg.delta,
                           rng=rng.child(_FINAL_ESTIMATE), c_jl=cfg.c_jl, rel_cutoff=cfg.rel_cutoff)
    final = sample(B0.matrix, oversample_probs(final_est, eps_levels[0], d, cfg.c_sample), 2.0,
                   rng.child(_FINAL_SAMPLE))
    result = B0.compose(final)
    history.append(result.n_rows)
    result.shrink_history = history
    logger.info(f"✅ l2 sample: {n} -> {result.n_rows} rows (history {history})")
    return result


@dataclass
class RegressionResult:
    """Least-squares solution computed on a row sample of [A, b]"""
    x: np.ndarray
    sketch_rows: int
    rank: int
    rank_deficient: bool
    sketch: SampledMatrix


def solve_l2_regression(
    A: SparseRowMatrix,
    b: np.ndarray,
    cfg: PipelineConfig,
    rng: Optional[RngStream] = None,
) -> RegressionResult:
    """
    Sketch-and-solve least squares: sample [A, b], then solve the small normal
    equations with the minimum-norm pseudoinverse.
    """
    n, d = A.shape
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.size != n:
        raise ContractViolation(f"b has length {b.size}, A has {n} rows")

    augmented = as_row_matrix(sp.hstack([A, sp.csr_matrix(b.reshape(-1, 1))], format="csr"))
    sketch = row_sample_l2(augmented, cfg, rng)
    S = sketch.matrix.tocsc()
    A_s = S[:, :d].tocsr()
    b_s = np.asarray(S[:, d].todense()).ravel()

    C = pinv_sqrt_factor(gram(A_s), cfg.rel_cutoff) if A_s.shape[0] else np.zeros((d, 0))
    rhs = np.asarray(A_s.T @ b_s).ravel()
    x = C @ (C.T @ rhs)
    rank = C.shape[1]
    if rank < d:
        logger.warning(f"⚠️ sketch Gram has rank {rank} < {d}; returning the minimum-norm solution")
    return RegressionResult(x=x, sketch_rows=sketch.n_rows, rank=rank, rank_deficient=rank < d, sketch=sketch)
