"""
Bench
Synthetic designs (Gaussian, power-law row norms, coherent spike), the
uniform-sampling baseline, and per-trial row count / time / pass records.
"""
import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from errors import ParameterError
from l2_pipeline import PipelineConfig, row_sample_l2
from lp_pipeline import LpConfig, row_sample_p_full
from matrix_core import SparseRowMatrix, as_row_matrix, check_capacity
from sketch_sampling import RngStream, SampledMatrix, ScoreVector, sample
from verify import loewner_check, lp_direction_check

logger = logging.getLogger(__name__)

POWER_LAW_SHAPE = 1.5


def gaussian_design(n: int, d: int, density: float, rng: RngStream) -> SparseRowMatrix:
    """Entries N(0, 1); with density < 1 each entry is kept independently"""
    gen = rng.generator()
    if density >= 1:
        return as_row_matrix(gen.standard_normal((n, d)))
    A = sp.random(n, d, density=density, format="csr", random_state=gen,
                  data_rvs=gen.standard_normal)
    return as_row_matrix(A)


def power_law_design(n: int, d: int, density: float, rng: RngStream) -> SparseRowMatrix:
    """Gaussian rows rescaled by Pareto(1.5) factors: a few rows dominate"""
    A = gaussian_design(n, d, density, rng.child(1))
    weights = 1.0 + rng.child(2).generator().pareto(POWER_LAW_SHAPE, size=n)
    return as_row_matrix(sp.diags(weights) @ A)


def coherent_spike_design(n: int, d: int, density: float, rng: RngStream) -> SparseRowMatrix:
    """
    Gaussian in the first d-1 columns plus one row that alone carries the last
    coordinate; that row has leverage 1.
    """
    if d < 2 or n < 2:
        raise ParameterError(f"spike design needs n, d >= 2, got {n} x {d}")
    body = gaussian_design(n - 1, d - 1, density, rng.child(1))
    body = sp.hstack([body, sp.csr_matrix((n - 1, 1))], format="csr")
    spike = sp.csr_matrix(([1.0], ([0], [d - 1])), shape=(1, d))
    at = int(rng.child(2).generator().integers(n))
    return as_row_matrix(sp.vstack([body[:at], spike, body[at:]], format="csr"))


DESIGNS: Dict[str, Callable[[int, int, float, RngStream], SparseRowMatrix]] = {
    "gaussian": gaussian_design,
    "power_law": power_law_design,
    "spike": coherent_spike_design,
}


def uniform_sample(A: SparseRowMatrix, budget: float, norm_p: float, rng: RngStream) -> SampledMatrix:
    """Keep every row with probability budget / n, rescaled like sample()"""
    n = A.shape[0]
    q = min(1.0, budget / max(n, 1))
    return sample(A, ScoreVector(np.full(n, q), kind="sampling-probability"), norm_p, rng)


@dataclass
class BenchTrial:
    design: str
    method: str
    n: int
    d: int
    trial: int
    rows: int
    seconds: float
    passed: bool


def run_bench(
    n: int,
    ds: Sequence[int],
    density: float = 1.0,
    trials: int = 1,
    norm: str = "l2",
    p: float = 1.0,
    eps: float = 0.5,
    seed: int = 0,
    l2_cfg: Optional[PipelineConfig] = None,
    lp_cfg: Optional[LpConfig] = None,
    designs: Sequence[str] = tuple(DESIGNS),
    n_dirs: int = 200,
) -> List[BenchTrial]:
    """
    For each design, d and trial: run the leverage pipeline, then uniform
    sampling at the same expected row budget, and verify both.
    """
    if n < 1 or trials < 1 or not ds or min(ds) < 2 or not 0 < density <= 1:
        raise ParameterError("bench needs n, trials >= 1, every d >= 2 and density in (0, 1]")
    unknown = set(designs) - set(DESIGNS)
    if unknown:
        raise ParameterError(f"unknown designs: {sorted(unknown)}")
    for d in ds:
        check_capacity(d)

    root = RngStream(seed)
    results: List[BenchTrial] = []
    for di, design in enumerate(designs):
        for d in ds:
            for t in range(trials):
                stream = root.child(di, d, t)
                A = DESIGNS[design](n, d, density, stream.child(0))

                start = time.perf_counter()
                if norm == "l2":
                    cfg = (l2_cfg or PipelineConfig()).with_overrides(eps=eps)
                    S = row_sample_l2(A, cfg, stream.child(1))
                else:
                    cfg = replace(lp_cfg or LpConfig(p=p), p=p, eps=eps)
                    S = row_sample_p_full(A, cfg, stream.child(1))
                elapsed = time.perf_counter() - start

                U = uniform_sample(A, S.n_rows, 2.0 if norm == "l2" else p, stream.child(2))
                for method, sketch, seconds in (("leverage", S, elapsed), ("uniform", U, 0.0)):
                    if norm == "l2":
                        ok = loewner_check(A, sketch.matrix, eps).passed
                    else:
                        ok = lp_direction_check(A, sketch.matrix, p, eps, n_dirs, stream.child(3)).passed
                    results.append(BenchTrial(design, method, n, d, t, sketch.n_rows, seconds, ok))

                logger.info(f"📊 {design} d={d} trial={t}: {S.n_rows} rows in {elapsed:.2f}s "
                            f"(leverage {'✅' if results[-2].passed else '❌'}, "
                            f"uniform {'✅' if results[-1].passed else '❌'})")
    return results


def reference_rows(d: int, eps: float, c: float) -> float:
    """c * d * ln(d) / eps^2"""
    return c * d * math.log(d) / eps ** 2


def summarize(results: Sequence[BenchTrial]) -> Dict[str, Dict[str, float]]:
    """Median rows and pass rate per (design, method)"""
    groups: Dict[str, List[BenchTrial]] = {}
    for r in results:
        groups.setdefault(f"{r.design}/{r.method}", []).append(r)
    return {
        key: {
            "median_rows": float(np.median([r.rows for r in group])),
            "pass_rate": sum(r.passed for r in group) / len(group),
            "median_seconds": float(np.median([r.seconds for r in group])),
        }
        for key, group in groups.items()
    }
