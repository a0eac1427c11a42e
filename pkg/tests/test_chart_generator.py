import chart_generator
from bench import BenchTrial
from chart_generator import generate_bench_chart

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _trials():
    out = []
    for d in (5, 10, 20):
        for t in range(2):
            out.append(BenchTrial("gaussian", "leverage", 1000, d, t, 30 * d + t, 0.1, True))
            out.append(BenchTrial("gaussian", "uniform", 1000, d, t, 30 * d + t, 0.0, d < 10))
            out.append(BenchTrial("spike", "leverage", 1000, d, t, 25 * d, 0.1, True))
    return out


def test_bench_chart_is_png():
    png = generate_bench_chart(_trials(), eps=0.5)
    assert png is not None
    assert png.startswith(PNG_MAGIC)


def test_bench_chart_single_d():
    trials = [BenchTrial("power_law", "leverage", 500, 8, 0, 100, 0.2, True)]
    assert generate_bench_chart(trials, eps=0.25, c_reference=2.0).startswith(PNG_MAGIC)


def test_bench_chart_empty():
    assert generate_bench_chart([], eps=0.5) is None


def test_median_rows_series():
    series = chart_generator._median_rows(_trials())
    assert series[("gaussian", "leverage")] == [(5, 150.5), (10, 300.5), (20, 600.5)]
    assert [d for d, _ in series[("spike", "leverage")]] == [5, 10, 20]
