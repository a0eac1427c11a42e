import json

import numpy as np

from config import REPORT_SCHEMA_VERSION
from run_report import PhaseTimer, RunReport
from verify import SpectralReport


def test_report_without_verification_has_null_pass(example_3x2):
    report = RunReport(command="leverage", seed=3)
    report.set_input(example_3x2)
    data = report.to_dict()
    assert data["pass"] is None
    assert data["input_rows"] == 3 and data["input_cols"] == 2 and data["input_nnz"] == 4
    assert data["schema"] == REPORT_SCHEMA_VERSION


def test_report_pass_aggregates_verifications():
    report = RunReport(command="sample")
    report.add_verification(SpectralReport(0.9, 1.1, 0.0, True, 0.5))
    assert report.passed is True
    report.add_verification(SpectralReport(0.1, 1.1, 0.0, False, 0.5))
    assert report.passed is False
    assert [v["pass"] for v in report.to_dict()["verification"]] == [True, False]


def test_report_json_converts_numpy_values():
    report = RunReport(command="bench", seed=np.int64(5))
    report.output_rows = np.int64(12)
    report.shrink_history = [np.int64(100), 40]
    report.extra["ratio"] = np.float64(1.25)
    report.extra["rows"] = np.arange(3)
    data = json.loads(report.to_json())
    assert data["seed"] == 5
    assert data["output_rows"] == 12
    assert data["shrink_history"] == [100, 40]
    assert data["extra"] == {"ratio": 1.25, "rows": [0, 1, 2]}


def test_phase_timer_accumulates():
    sink = {}
    with PhaseTimer("solve", sink):
        pass
    first = sink["solve"]
    with PhaseTimer("solve", sink):
        sum(range(1000))
    assert sink["solve"] >= first >= 0.0


def test_phase_timer_records_on_error():
    report = RunReport(command="verify")
    try:
        with report.phase("read"):
            raise ValueError("boom")
    except ValueError:
        pass
    assert "read" in report.phase_seconds
