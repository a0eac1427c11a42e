"""
Run Report
Per-command record written as versioned JSON: config echo, dims, per-phase
wall times, seed, shrink history and verification sub-reports.
"""
import json
import logging
import time
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from config import REPORT_SCHEMA_VERSION

logger = logging.getLogger(__name__)


def _jsonable(value: Any) -> Any:
    if is_dataclass(value) and not isinstance(value, type):
        return _jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


@dataclass
class RunReport:
    """What a CLI command did, enough to reproduce it from the seed"""
    command: str
    seed: Optional[int] = None
    config: Dict[str, Any] = field(default_factory=dict)
    input_rows: int = 0
    input_cols: int = 0
    input_nnz: int = 0
    output_rows: Optional[int] = None
    phase_seconds: Dict[str, float] = field(default_factory=dict)
    shrink_history: List[int] = field(default_factory=list)
    verification: List[Dict[str, Any]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)
    schema: str = REPORT_SCHEMA_VERSION

    def set_input(self, A):
        self.input_rows, self.input_cols = A.shape
        self.input_nnz = int(A.nnz)

    def add_verification(self, report):
        self.verification.append(report.to_dict())

    @property
    def passed(self) -> Optional[bool]:
        """None when nothing was verified"""
        if not self.verification:
            return None
        return all(v["pass"] for v in self.verification)

    def phase(self, name: str) -> "PhaseTimer":
        return PhaseTimer(name, self.phase_seconds)

    def to_dict(self) -> Dict[str, Any]:
        data = _jsonable(asdict(self))
        data["pass"] = self.passed
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class PhaseTimer:
    """Context manager adding elapsed wall time to sink[name]"""

    def __init__(self, name: str, sink: Dict[str, float]):
        self.name = name
        self.sink = sink
        self._start = 0.0

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self._start
        self.sink[self.name] = self.sink.get(self.name, 0.0) + elapsed
        logger.debug(f"⏱️ {self.name}: {elapsed:.3f}s")
        return False
