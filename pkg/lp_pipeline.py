"""
Lp Pipeline
Well-conditioned bases from l2 sketches, p-stable / Gaussian norm estimation,
the ReduceP / RowSampleP iteration, nnz bucketing and the two-level refinement.
"""
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import levy_stable

from config import (
    C_JL, C_P, C_STABLE, DEFAULT_DELTA, DEFAULT_THETA, GUARANTEE_MAX_EPS,
    MAX_REDUCE_ITERATIONS, N_STAR_CONST, RANK_REL_CUTOFF, STABILIZED_SHRINK,
    STABLE_MEDIAN_SAMPLES, STABLE_MEDIAN_SEED, THREADS,
)
from errors import ContractViolation, DegenerateBasisError, IterationLimitError, ParameterError
from l2_pipeline import PipelineConfig, row_sample_l2
from matrix_core import SparseRowMatrix, empty_rows, gram, pinv_sqrt_factor, row_nnz
from sketch_sampling import (
    RngStream, SampledMatrix, ScoreVector, concat_samples, jl_rows, sample,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BasisCertificate:
    """C (d x r) such that A C is an (alpha, beta, p)-well-conditioned basis"""
    C: np.ndarray
    alpha: float
    beta: float
    p: float

    def __post_init__(self):
        if not 1 <= self.p < 4:
            raise ParameterError(f"certificate p must lie in [1, 4), got {self.p}")
        floor = 1 / math.sqrt(2)
        for name, value in (("alpha", self.alpha), ("beta", self.beta)):
            if not math.isfinite(value) or value < floor - 1e-12:
                raise ContractViolation(f"{name} = {value} must be finite and >= 1/sqrt(2)")
        if self.C.ndim != 2 or self.C.shape[1] > self.C.shape[0]:
            raise ContractViolation(f"C must be d x r with r <= d, got {self.C.shape}")

    @property
    def q(self) -> float:
        """Dual norm exponent, 1/p + 1/q = 1"""
        return math.inf if self.p == 1 else self.p / (self.p - 1)

    @property
    def rank(self) -> int:
        return self.C.shape[1]


@dataclass
class LpConfig:
    """Tunable constants for the lp row samplers (defaults from config.py)"""
    p: float = 1.0
    p_prime: Optional[float] = None   # None -> sqrt(2p)
    theta: float = DEFAULT_THETA
    eps: float = 0.5
    R_est: Optional[float] = None     # None -> d^(theta / 2p)
    c_p: float = C_P
    n_star_const: float = N_STAR_CONST
    delta: float = DEFAULT_DELTA
    c_stable: float = C_STABLE
    c_jl: float = C_JL
    guarantee: bool = False
    seed: int = 0
    l2: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if self.p >= 4:
            raise ParameterError("unsupported: p >= 4 needs the multi-step extension, which is omitted")
        if self.p < 1:
            raise ParameterError(f"p must be >= 1, got {self.p}")
        if not 0 < self.eps < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps}")
        if self.guarantee and self.eps > GUARANTEE_MAX_EPS:
            raise ParameterError(f"guarantee mode needs eps <= 1/7, got {self.eps}")
        if self.p_prime is not None and not 1 <= self.p_prime <= 2:
            raise ParameterError(f"p_prime must lie in [1, 2], got {self.p_prime}")
        if self.R_est is not None and self.R_est <= 1:
            raise ParameterError(f"R_est must exceed 1, got {self.R_est}")
        if self.theta <= 0 or self.c_p <= 0 or self.n_star_const <= 0:
            raise ParameterError("theta, c_p and n_star_const must be positive")

    @property
    def empirical_only(self) -> bool:
        return self.eps > GUARANTEE_MAX_EPS

    def resolved_p_prime(self) -> float:
        return self.p_prime if self.p_prime is not None else min(2.0, math.sqrt(2 * self.p))

    def resolved_R_est(self, d: int) -> float:
        return self.R_est if self.R_est is not None else d ** (self.theta / (2 * self.p))

    def for_norm(self, p: float, eps: Optional[float] = None) -> "LpConfig":
        return replace(self, p=p, R_est=None, guarantee=False, eps=self.eps if eps is None else eps)


# ============================================================
# Well-conditioned bases
# ============================================================

def _basis_factor(A_short: SparseRowMatrix, rel_cutoff: float) -> np.ndarray:
    C = pinv_sqrt_factor(gram(A_short), rel_cutoff)
    if C.shape[1] == 0:
        raise DegenerateBasisError("sketch Gram matrix has numerical rank 0")
    return C


def lp_alpha_beta(n: int, d: int, p: float) -> Tuple[float, float]:
    """(alpha, beta) for A C with (2/3) I <= (AC)^T (AC) <= 2 I, n rows"""
    nd = max(n, 1) * d
    if p <= 2:
        return math.sqrt(2) * nd ** (1 / p - 0.5) * math.sqrt(d), math.sqrt(2)
    return math.sqrt(2) * math.sqrt(d), math.sqrt(2) * nd ** (0.5 - 1 / p)


def well_conditioned_basis_l2(
    A_approx: SparseRowMatrix,
    n: int,
    d: int,
    p: float,
    cfg: Optional[PipelineConfig] = None,
    transfer: bool = False,
) -> BasisCertificate:
    """
    Basis from an l2 sketch: C C^T = (A~^T A~)^+.

    Args:
        A_approx: l2 sketch with 1/2..3/2 Gram sandwich w.r.t. the target
        n: row count of the matrix the certificate is stated for
        d: column count
        p: target norm
        transfer: certificate is used for the un-sketched A, so carry (2 alpha, 2 beta)
    """
    if A_approx.shape[1] != d:
        raise ContractViolation(f"sketch has {A_approx.shape[1]} columns, expected {d}")
    rel_cutoff = cfg.rel_cutoff if cfg else RANK_REL_CUTOFF
    C = _basis_factor(A_approx, rel_cutoff)
    alpha, beta = lp_alpha_beta(n, d, p)
    if transfer:
        alpha, beta = 2 * alpha, 2 * beta
    return BasisCertificate(C=C, alpha=alpha, beta=beta, p=p)


def well_conditioned_basis_two_level(
    A_short: SparseRowMatrix,
    n: int,
    n_tilde: int,
    d: int,
    p: float,
    p_prime: float,
    rel_cutoff: float = RANK_REL_CUTOFF,
    transfer: bool = False,
) -> BasisCertificate:
    """
    Basis for an n-row matrix from the l2 sketch of its n_tilde-row
    l_{p'} approximation (1 <= p <= p' <= 2):
    alpha = 3/2 (nd)^(1/p - 1/p') (n~ d)^(1/p' - 1/2) sqrt(2d), beta = 3.
    With transfer the certificate is applied to a matrix the n-row one
    approximates within factor 2, so (2 alpha, 2 beta) is returned.
    """
    if not 1 <= p <= p_prime <= 2:
        raise ParameterError(f"two-level basis needs 1 <= p <= p' <= 2, got p={p}, p'={p_prime}")
    C = _basis_factor(A_short, rel_cutoff)
    alpha = 1.5 * (max(n, 1) * d) ** (1 / p - 1 / p_prime) \
        * (max(n_tilde, 1) * d) ** (1 / p_prime - 0.5) * math.sqrt(2 * d)
    beta = 3.0
    if transfer:
        alpha, beta = 2 * alpha, 2 * beta
    return BasisCertificate(C=C, alpha=alpha, beta=beta, p=p)


# ============================================================
# Norm estimation
# ============================================================

class StableMedianCache:
    """median(|X|) for standard symmetric p-stable X, computed once per p"""

    def __init__(self, samples: int = STABLE_MEDIAN_SAMPLES):
        self._samples = samples
        self._cache: Dict[float, float] = {1.0: 1.0}  # Cauchy: tan(pi/4)
        self._lock = threading.Lock()

    def sample_median(self, p: float) -> float:
        """Monte Carlo median of |X| from a fixed seed"""
        gen = np.random.default_rng(STABLE_MEDIAN_SEED)
        draws = levy_stable.rvs(p, 0.0, size=self._samples, random_state=gen)
        return float(np.median(np.abs(draws)))

    def get(self, p: float) -> float:
        with self._lock:
            if p not in self._cache:
                self._cache[p] = self.sample_median(p)
                logger.debug(f"median |{p}-stable| = {self._cache[p]:.6f}")
            return self._cache[p]


# Singleton
_stable_median_cache: Optional[StableMedianCache] = None


def get_stable_median_cache() -> StableMedianCache:
    """Get singleton p-stable median cache"""
    global _stable_median_cache
    if _stable_median_cache is None:
        _stable_median_cache = StableMedianCache()
    return _stable_median_cache


def stable_sketch_width(R_est: float, delta: float, c_stable: float = C_STABLE) -> int:
    return max(1, math.ceil(c_stable * math.log(1.0 / delta) / math.log(R_est)))


def _draw_stable(gen: np.random.Generator, p: float, shape: Tuple[int, int]) -> np.ndarray:
    if p == 1.0:
        return gen.standard_cauchy(shape)
    return levy_stable.rvs(p, 0.0, size=shape, random_state=gen)


def p_stable_estimates(
    M: SparseRowMatrix,
    C: np.ndarray,
    p: float,
    R_est: float,
    delta: float,
    rng: RngStream,
    c_stable: float = C_STABLE,
) -> ScoreVector:
    """
    Estimate ||(MC)_i||_p^p for every row with a p-stable sketch:
    lambda~_i = (median_j |(M C Pi^T)_ij| / median|X_p|)^p.
    """
    if not 0 < p < 2:
        raise ParameterError(f"p-stable estimation needs 0 < p < 2, got {p}; use gaussian_estimates")
    if R_est <= 1:
        raise ParameterError(f"R_est must exceed 1, got {R_est}")
    if M.shape[1] != C.shape[0]:
        raise ContractViolation(f"M has {M.shape[1]} columns, C has {C.shape[0]} rows")

    k = stable_sketch_width(R_est, delta, c_stable)
    Pi = _draw_stable(rng.generator(), p, (k, C.shape[1]))
    sketch = np.asarray(M @ (C @ Pi.T))
    scale = get_stable_median_cache().get(p)
    estimates = (np.median(np.abs(sketch), axis=1) / scale) ** p
    return ScoreVector(estimates, kind="stretch-estimate")


def gaussian_estimates(
    M: SparseRowMatrix,
    C: np.ndarray,
    p: float,
    R_est: float,
    delta: float,
    rng: RngStream,
    c_jl: float = C_JL,
) -> ScoreVector:
    """
    l2 surrogate for p >= 2: (||Pi (MC)_i^T||^2 / k)^(p/2). The d^(p/2 - 1)
    Holder distortion is paid in the sampling probabilities.
    """
    if p < 2:
        raise ParameterError(f"gaussian estimation needs p >= 2, got {p}")
    if R_est <= 1:
        raise ParameterError(f"R_est must exceed 1, got {R_est}")
    if M.shape[1] != C.shape[0]:
        raise ContractViolation(f"M has {M.shape[1]} columns, C has {C.shape[0]} rows")

    k = jl_rows(R_est, delta, c_jl)
    Pi = rng.generator().standard_normal((k, C.shape[1]))
    sketch = np.asarray(M @ (C @ Pi.T))
    squared = np.einsum("ij,ij->i", sketch, sketch) / k
    return ScoreVector(squared ** (p / 2), kind="stretch-estimate")


# ============================================================
# Sampling and reduction
# ============================================================

def sampling_budget(alpha: float, beta: float, d: int, p: float, R_est: float, eps: float, c_p: float) -> float:
    """
    Sum of sampling probabilities: c_p R^2p (alpha beta)^p d ln d / eps^2,
    times d^(p/2 - 1) when p > 2 (l2 surrogate distortion).
    """
    budget = c_p * R_est ** (2 * p) * (alpha * beta) ** p * d * math.log(d) / eps ** 2
    if p > 2:
        budget *= d ** (p / 2 - 1)
    return budget


def estimate_and_sample_p(
    A: SparseRowMatrix,
    cert: BasisCertificate,
    R_est: float,
    eps: float,
    rng: RngStream,
    cfg: Optional[LpConfig] = None,
) -> SampledMatrix:
    """
    Estimate the lp norms of the rows of A C and sample with
    p_i = budget * lambda~_i / sum(lambda~), rescaling by p_i^(-1/p).
    """
    cfg = cfg or LpConfig(p=min(cert.p, 3.99))
    n, d = A.shape
    if cert.C.shape[0] != d:
        raise ContractViolation(f"certificate has {cert.C.shape[0]} rows, A has {d} columns")
    if d < 2:
        raise ContractViolation(f"lp sampling needs d >= 2, got d={d}")
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")

    p = cert.p
    if p < 2:
        lam = p_stable_estimates(A, cert.C, p, R_est, cfg.delta, rng.child(1), cfg.c_stable)
    else:
        lam = gaussian_estimates(A, cert.C, p, R_est, cfg.delta, rng.child(1), cfg.c_jl)

    total = lam.total
    if total <= 0:
        logger.warning("⚠️ All lp estimates are zero, returning an empty sample")
        return SampledMatrix(empty_rows(d), np.zeros(0), np.zeros(0), warnings=["all-zero lp estimates"])

    budget = sampling_budget(cert.alpha, cert.beta, d, p, R_est, eps, cfg.c_p)
    probs = ScoreVector(budget * lam.values / total, kind="sampling-probability")
    result = sample(A, probs, p, rng.child(2))
    logger.debug(f"estimate_and_sample_p: p={p} budget={budget:.3g} kept {result.n_rows}/{n}")
    return result


def reduce_p(
    A: SparseRowMatrix,
    A_approx: SparseRowMatrix,
    eps: float,
    cfg: LpConfig,
    rng: RngStream,
) -> SampledMatrix:
    """
    One reduction step: l2-sketch A_approx at eps = 1/3, take the basis of the
    sketch (inflated to (2 alpha, 2 beta) for A), then estimate and sample A.

    A_approx must satisfy ||Ax||_p / 2 <= ||A_approx x||_p <= 3 ||Ax||_p / 2.
    """
    d = A.shape[1]
    l2_cfg = cfg.l2.with_overrides(eps=1 / 3, delta=cfg.delta / 2)
    short = row_sample_l2(A_approx, l2_cfg, rng.child(1))
    cert = well_conditioned_basis_l2(short.matrix, A_approx.shape[0], d, cfg.p, l2_cfg, transfer=True)
    return estimate_and_sample_p(A, cert, cfg.resolved_R_est(d), eps, rng.child(2), cfg)


def row_constant(d: int, cfg: LpConfig, eps: float) -> Tuple[float, float]:
    """
    (K, c) with E[rows out of reduce_p] <= K * n~^c for an n~-row approximation;
    c = |1 - p/2|.
    """
    p = cfg.p
    alpha, beta = lp_alpha_beta(1, d, p)
    c = abs(1 - p / 2)
    K = sampling_budget(2 * alpha, 2 * beta, d, p, cfg.resolved_R_est(d), eps, cfg.c_p)
    return K, c


def n_star(d: int, cfg: LpConfig) -> float:
    """
    Row threshold of RowSampleP: n_star_const times the fixed point of
    n~ -> K n~^c at eps = 1/5, i.e. c0^(2/p) d^(4/p + O(theta)) log^(2/p) d for
    p <= 2 and c0^(2/(4-p)) d^((3p-2)/(4-p) + O(theta)) log^(2/(4-p)) d for p > 2.
    """
    K, c = row_constant(d, cfg, 1 / 5)
    return cfg.n_star_const * K ** (1 / (1 - c))


def row_sample_p(A: SparseRowMatrix, cfg: LpConfig, rng: Optional[RngStream] = None) -> SampledMatrix:
    """
    Row sample of poly(d) size preserving the lp norm (rows should have nnz
    within a factor 2 of each other; see row_sample_p_full).

    Repeatedly reduces a first approximation A~0 using the latest A~ as its
    basis source until A~ has at most n* rows, then samples A itself at eps/2.
    """
    rng = rng or RngStream(cfg.seed)
    n, d = A.shape
    threshold = n_star(d, cfg)
    if cfg.empirical_only:
        logger.debug(f"eps = {cfg.eps} > 1/7: lp guarantees are empirical only")
    if n <= threshold:
        logger.info(f"📦 n={n} <= n*={threshold:.0f}, returning A unchanged")
        result = SampledMatrix.identity(A)
        result.shrink_history = [n]
        return result

    approx0 = reduce_p(A, A, 1 / 5, cfg, rng.child(1, 0))
    approx = approx0.matrix
    history = [n, approx.shape[0]]
    logger.info(f"🔁 lp reduce (p={cfg.p}): n*={threshold:.0f}, {n} -> {approx.shape[0]}")

    iteration = 1
    while approx.shape[0] > threshold:
        if iteration >= MAX_REDUCE_ITERATIONS:
            raise IterationLimitError(f"row_sample_p hit {MAX_REDUCE_ITERATIONS} iterations", history)
        nxt = reduce_p(approx0.matrix, approx, 1 / 5, cfg, rng.child(1, iteration)).matrix
        if nxt.shape[0] >= approx.shape[0]:
            # redraw from the next stream until the iteration cap
            logger.warning(f"⚠️ iteration {iteration} kept {nxt.shape[0]} of {approx.shape[0]} rows, retrying")
            iteration += 1
            continue
        approx = nxt
        history.append(approx.shape[0])
        logger.info(f"🔁 iteration {iteration}: {history[-2]} -> {history[-1]}")
        iteration += 1

    result = reduce_p(A, approx, cfg.eps / 2, cfg, rng.child(2))
    result.shrink_history = history + [result.n_rows]
    if cfg.empirical_only:
        result.warnings.append("eps > 1/7: guarantees are empirical only")
    logger.info(f"✅ lp sample (p={cfg.p}): {n} -> {result.n_rows} rows")
    return result


@dataclass
class NnzBucket:
    """Rows with nnz in [2^level, 2^(level+1))"""
    level: int
    matrix: SparseRowMatrix
    rows: np.ndarray  # bucket row -> original row


def bucket_by_nnz(A: SparseRowMatrix) -> Tuple[List[NnzBucket], np.ndarray]:
    """
    Partition nonzero rows by floor(log2(nnz)).

    Returns:
        (buckets sorted by level, indices of the dropped all-zero rows)
    """
    counts = row_nnz(A)
    zero_rows = np.flatnonzero(counts == 0)
    live = np.flatnonzero(counts > 0)
    levels = np.floor(np.log2(counts[live])).astype(np.int64)
    buckets = []
    for level in np.unique(levels):
        rows = live[levels == level]
        buckets.append(NnzBucket(level=int(level), matrix=A[rows], rows=rows))
    if zero_rows.size:
        logger.debug(f"bucket_by_nnz: dropped {zero_rows.size} zero rows")
    return buckets, zero_rows


def row_sample_p_full(A: SparseRowMatrix, cfg: LpConfig, rng: Optional[RngStream] = None) -> SampledMatrix:
    """Bucket rows by nnz, sample each bucket separately, concatenate"""
    rng = rng or RngStream(cfg.seed)
    if A.shape[0] <= n_star(A.shape[1], cfg):
        return row_sample_p(A, cfg, rng)

    buckets, _ = bucket_by_nnz(A)
    if not buckets:
        return SampledMatrix(empty_rows(A.shape[1]), np.zeros(0), np.zeros(0), warnings=["no nonzero rows"])

    def run(bucket: NnzBucket) -> SampledMatrix:
        return row_sample_p(bucket.matrix, cfg, rng.child(3, bucket.level)).remap(bucket.rows)

    workers = max(1, min(THREADS, len(buckets)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, buckets))
    logger.info(f"🪣 {len(buckets)} nnz buckets -> {sum(p.n_rows for p in parts)} rows")
    return concat_samples(parts, A.shape[1])


def _two_level_round(
    source: SparseRowMatrix,
    approx: SparseRowMatrix,
    eps: float,
    cfg: LpConfig,
    rng: RngStream,
) -> Tuple[SampledMatrix, int]:
    d = source.shape[1]
    p_prime = cfg.resolved_p_prime()
    inner = row_sample_p(approx, cfg.for_norm(p_prime, eps=0.5), rng.child(1))
    l2_cfg = cfg.l2.with_overrides(eps=1 / 3, delta=cfg.delta / 2)
    short = row_sample_l2(inner.matrix, l2_cfg, rng.child(2))
    cert = well_conditioned_basis_two_level(short.matrix, approx.shape[0], inner.n_rows, d,
                                            cfg.p, p_prime, l2_cfg.rel_cutoff,
                                            transfer=source is not approx)
    sampled = estimate_and_sample_p(source, cert, cfg.resolved_R_est(d), eps, rng.child(3), cfg)
    return sampled, inner.n_rows


def two_level_lp(A: SparseRowMatrix, cfg: LpConfig, rng: Optional[RngStream] = None) -> SampledMatrix:
    """
    Row sampling for 1 <= p <= 2 with leverage estimates taken through an
    intermediate l_{p'} sample. Mirrors row_sample_p: anchor A~0, refine A~
    until the row count stabilizes, final pass on A at eps/2.
    """
    rng = rng or RngStream(cfg.seed)
    if not 1 <= cfg.p <= 2:
        raise ParameterError(f"two-level sampling needs 1 <= p <= 2, got {cfg.p}")
    p_prime = cfg.resolved_p_prime()
    if p_prime < cfg.p:
        raise ParameterError(f"p' = {p_prime} must be >= p = {cfg.p}")

    n, d = A.shape
    threshold = n_star(d, cfg)
    if n <= threshold:
        logger.info(f"📦 n={n} <= n*={threshold:.0f}, returning A unchanged")
        result = SampledMatrix.identity(A)
        result.shrink_history = [n]
        return result

    approx0, n_tilde = _two_level_round(A, A, 1 / 5, cfg, rng.child(1, 0))
    approx = approx0.matrix
    history = [n, approx.shape[0]]
    logger.info(f"🔁 two-level (p={cfg.p}, p'={p_prime:.3f}): {n} -> {approx.shape[0]} (n~={n_tilde})")

    iteration = 1
    while approx.shape[0] > d:
        if iteration >= MAX_REDUCE_ITERATIONS:
            raise IterationLimitError(f"two_level_lp hit {MAX_REDUCE_ITERATIONS} iterations", history)
        nxt, n_tilde = _two_level_round(approx0.matrix, approx, 1 / 5, cfg, rng.child(1, iteration))
        iteration += 1
        if nxt.n_rows > STABILIZED_SHRINK * approx.shape[0]:
            logger.info(f"🔁 stabilized at {approx.shape[0]} rows (next round gave {nxt.n_rows})")
            break
        approx = nxt.matrix
        history.append(approx.shape[0])
        logger.info(f"🔁 round {iteration - 1}: {history[-2]} -> {history[-1]} (n~={n_tilde})")

    result, _ = _two_level_round(A, approx, cfg.eps / 2, cfg, rng.child(2))
    result.shrink_history = history + [result.n_rows]
    if cfg.empirical_only:
        result.warnings.append("eps > 1/7: guarantees are empirical only")
    logger.info(f"✅ two-level sample: {n} -> {result.n_rows} rows")
    return result


def two_level_l1(A: SparseRowMatrix, cfg: LpConfig, rng: Optional[RngStream] = None) -> SampledMatrix:
    """Two-level l1 sampling through an l_{sqrt 2} intermediate"""
    if cfg.p != 1:
        raise ParameterError(f"two_level_l1 needs p = 1, got {cfg.p}")
    p_prime = cfg.resolved_p_prime()
    if not 1 < p_prime <= 2:
        raise ParameterError(f"p' must lie in (1, 2], got {p_prime}")
    return two_level_lp(A, cfg, rng)
