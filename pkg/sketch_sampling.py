"""
Sketch Sampling
The Sample blackbox, exact leverage scores, generalized stretch and the
JL-based stretch upper bound (ApproxStr).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm

from config import C_JL, C_SAMPLE, DEFAULT_DELTA, RANK_REL_CUTOFF
from errors import ContractViolation, ParameterError
from matrix_core import SparseRowMatrix, as_row_matrix, empty_rows, gram, pinv_sqrt_factor, scale_rows

logger = logging.getLogger(__name__)

ScoreKind = Literal["exact-leverage", "stretch-estimate", "sampling-probability"]


@dataclass(frozen=True)
class RngStream:
    """
    Seeded random stream. Identical (seed, stream_id) gives identical draws;
    children extend the spawn key so sibling streams are independent.
    """
    seed: int
    stream_id: Tuple[int, ...] = ()

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=self.stream_id)
        return np.random.default_rng(seq)


@dataclass(frozen=True)
class ScoreVector:
    """Per-row nonnegative importances"""
    values: np.ndarray
    kind: ScoreKind

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ContractViolation("score vector must be 1-D")
        if values.size and (not np.all(np.isfinite(values)) or np.any(values < 0)):
            raise ContractViolation("scores must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def total(self) -> float:
        return float(self.values.sum())


@dataclass
class SampledMatrix:
    """
    Output sketch: each row is scales[j] * origin[source_rows[j]].
    """
    matrix: SparseRowMatrix
    source_rows: np.ndarray
    scales: np.ndarray
    warnings: List[str] = field(default_factory=list)
    shrink_history: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.source_rows = np.asarray(self.source_rows, dtype=np.int64)
        self.scales = np.asarray(self.scales, dtype=np.float64)
        if self.source_rows.size != self.matrix.shape[0] or self.scales.size != self.matrix.shape[0]:
            raise ContractViolation("provenance length must match output row count")
        if self.scales.size and np.any(self.scales <= 0):
            raise ContractViolation("provenance scales must be positive")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, A: SparseRowMatrix) -> "SampledMatrix":
        n = A.shape[0]
        return cls(matrix=A, source_rows=np.arange(n), scales=np.ones(n))

    def compose(self, outer: "SampledMatrix") -> "SampledMatrix":
        """Provenance of `outer`, which was sampled from self.matrix, in terms of self's origin"""
        return SampledMatrix(
            matrix=outer.matrix,
            source_rows=self.source_rows[outer.source_rows],
            scales=self.scales[outer.source_rows] * outer.scales,
            warnings=self.warnings + outer.warnings,
            shrink_history=outer.shrink_history,
        )

    def remap(self, index_map: np.ndarray) -> "SampledMatrix":
        """Rewrite source rows through index_map (sub-matrix row -> parent row)"""
        return SampledMatrix(
            matrix=self.matrix,
            source_rows=np.asarray(index_map)[self.source_rows],
            scales=self.scales,
            warnings=list(self.warnings),
            shrink_history=list(self.shrink_history),
        )

    def provenance(self) -> List[Tuple[int, float]]:
        return list(zip(self.source_rows.tolist(), self.scales.tolist()))


def concat_samples(parts: Sequence[SampledMatrix], n_cols: int) -> SampledMatrix:
    if not parts:
        return SampledMatrix(empty_rows(n_cols), np.zeros(0), np.zeros(0))
    return SampledMatrix(
        matrix=as_row_matrix(sp.vstack([p.matrix for p in parts], format="csr")),
        source_rows=np.concatenate([p.source_rows for p in parts]),
        scales=np.concatenate([p.scales for p in parts]),
        warnings=[w for p in parts for w in p.warnings],
        shrink_history=[h for p in parts for h in p.shrink_history],
    )


def sample(A: SparseRowMatrix, probs: ScoreVector, norm_p: float, rng: RngStream) -> SampledMatrix:
    """
    Keep row i independently with probability q_i = min(1, probs_i) and
    rescale kept rows by q_i^(-1/norm_p), preserving E||Ax||_p^p.
    """
    n = A.shape[0]
    if len(probs) != n:
        raise ContractViolation(f"probability vector has length {len(probs)}, matrix has {n} rows")
    if norm_p < 1:
        raise ParameterError(f"norm_p must be >= 1, got {norm_p}")

    q = np.minimum(1.0, probs.values)
    if n and not np.any(q > 0):
        logger.warning("⚠️ All sampling probabilities are zero, returning an empty sample")
        return SampledMatrix(empty_rows(A.shape[1]), np.zeros(0), np.zeros(0),
                             warnings=["all-zero sampling probabilities"])

    # one uniform per row, always drawn, so the stream position is independent of q
    u = rng.generator().random(n)
    keep = np.flatnonzero(u < q)
    scales = q[keep] ** (-1.0 / norm_p)
    B = scale_rows(A[keep], scales)
    logger.debug(f"sample: kept {keep.size}/{n} rows (expected {q.sum():.1f})")
    return SampledMatrix(matrix=B, source_rows=keep, scales=scales)


def oversample_probs(scores: ScoreVector, eps: float, d: int, c_sample: float = C_SAMPLE) -> ScoreVector:
    """Multiply leverage upper bounds by c_sample * ln(d) / eps^2"""
    if not 0 < eps <= 1:
        raise ParameterError(f"eps must lie in (0, 1], got {eps}")
    if d < 2:
        raise ParameterError(f"d must be >= 2, got {d}")
    factor = c_sample * math.log(d) / eps ** 2
    return ScoreVector(scores.values * factor, kind="sampling-probability")


def _stretch_from_factor(A: SparseRowMatrix, C: np.ndarray) -> np.ndarray:
    if C.shape[1] == 0:
        return np.zeros(A.shape[0])
    AC = np.asarray(A @ C)
    return np.einsum("ij,ij->i", AC, AC)


def stretch(A: SparseRowMatrix, B: SparseRowMatrix, rel_cutoff: float = RANK_REL_CUTOFF) -> ScoreVector:
    """
    Exact generalized stretch str_B(a_i) = a_i (B^T B)^+ a_i^T, evaluated as
    ||C^T a_i^T||^2 with C C^T = (B^T B)^+.
    """
    if A.shape[1] != B.shape[1]:
        raise ContractViolation(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")
    C = pinv_sqrt_factor(gram(B), rel_cutoff)
    return ScoreVector(_stretch_from_factor(A, C), kind="stretch-estimate")


def exact_leverage_scores(A: SparseRowMatrix, rel_cutoff: float = RANK_REL_CUTOFF) -> ScoreVector:
    """tau_i = a_i (A^T A)^+ a_i^T; each in [0, 1], summing to rank(A)"""
    C = pinv_sqrt_factor(gram(A), rel_cutoff)
    tau = np.clip(_stretch_from_factor(A, C), 0.0, 1.0)
    return ScoreVector(tau, kind="exact-leverage")


def jl_rows(rho: float, delta: float, c_jl: float = C_JL) -> int:
    """k = ceil(c_jl * ln(1/delta) / ln(rho)), at least one row"""
    return max(1, math.ceil(c_jl * math.log(1.0 / delta) / math.log(rho)))


def approx_str(
    A: SparseRowMatrix,
    B: SparseRowMatrix,
    kappa: float,
    rho: float,
    delta: float = DEFAULT_DELTA,
    rng: RngStream = RngStream(0),
    c_jl: float = C_JL,
    rel_cutoff: float = RANK_REL_CUTOFF,
) -> ScoreVector:
    """
    Upper bounds on the stretch of every row of A w.r.t. A itself, measured
    through B with (1/kappa) A^T A <= B^T B <= A^T A (not checked here).

    tau~_i = (rho / k) ||Pi C^T a_i^T||^2 with Pi a k x r Gaussian matrix;
    each tau~_i >= tau_i with probability >= 1 - delta and
    E||tau~||_1 <= rho * kappa * rank.
    """
    if rho < math.e ** 2:
        raise ParameterError(f"rho must be >= e^2, got {rho}")
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if A.shape[1] != B.shape[1]:
        raise ContractViolation(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")

    C = pinv_sqrt_factor(gram(B), rel_cutoff)
    k = jl_rows(rho, delta, c_jl)
    Pi = rng.generator().standard_normal((k, C.shape[1]))
    logger.debug(f"approx_str: n={A.shape[0]} k={k} rank={C.shape[1]} kappa={kappa} rho={rho:.2f}")

    sketch = np.asarray(A @ (C @ Pi.T)) if C.shape[1] else np.zeros((A.shape[0], k))
    estimates = (rho / k) * np.einsum("ij,ij->i", sketch, sketch)
    return ScoreVector(estimates, kind="stretch-estimate")


def verify_provenance(A: SparseRowMatrix, S: SampledMatrix, rtol: float = 1e-12) -> bool:
    """True iff every output row equals scale * A[source_row] within rtol"""
    if S.n_rows == 0:
        return True
    if S.source_rows.min() < 0 or S.source_rows.max() >= A.shape[0]:
        return False
    if S.matrix.shape[1] != A.shape[1]:
        return False
    expected = sp.diags(S.scales) @ A[S.source_rows]
    diff = (S.matrix - expected).tocsr()
    if diff.nnz == 0:
        return True
    row_err = sparse_norm(diff, axis=1)
    row_ref = np.maximum(sparse_norm(expected, axis=1), sparse_norm(S.matrix, axis=1))
    return bool(np.all(row_err <= rtol * np.maximum(row_ref, np.finfo(float).tiny)))
