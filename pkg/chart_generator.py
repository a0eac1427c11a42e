"""
Chart Generator
Bench chart: output rows vs d per design and method, with the d ln d reference
"""
import io
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from bench import BenchTrial, reference_rows

logger = logging.getLogger(__name__)

# Dark theme colors
CHART_BG_COLOR = '#0d1117'
LEVERAGE_COLOR = '#4ade80'  # Green
UNIFORM_COLOR = '#f87171'   # Red
REFERENCE_COLOR = '#8b949e'
GRID_COLOR = '#30363d'
TEXT_COLOR = '#e6edf3'

DESIGN_MARKERS = {"gaussian": "o", "power_law": "s", "spike": "^"}


def _median_rows(results: Sequence[BenchTrial]) -> Dict[Tuple[str, str], List[Tuple[int, float]]]:
    cells: Dict[Tuple[str, str, int], List[int]] = {}
    for r in results:
        cells.setdefault((r.design, r.method, r.d), []).append(r.rows)
    series: Dict[Tuple[str, str], List[Tuple[int, float]]] = {}
    for (design, method, d), rows in sorted(cells.items()):
        series.setdefault((design, method), []).append((d, float(np.median(rows))))
    return series


def generate_bench_chart(
    results: Sequence[BenchTrial],
    eps: float,
    c_reference: float = 1.0,
    title: str = "Row sample size vs d",
) -> Optional[bytes]:
    """
    Render bench results as a PNG.

    Args:
        results: Trials from bench.run_bench
        eps: Accuracy used for the reference curve c d ln d / eps^2
        c_reference: Constant of the reference curve
    """
    if not results:
        return None

    try:
        fig, ax = plt.subplots(figsize=(8, 4), facecolor=CHART_BG_COLOR)
        ax.set_facecolor(CHART_BG_COLOR)

        for (design, method), points in _median_rows(results).items():
            ds, rows = zip(*points)
            color = LEVERAGE_COLOR if method == "leverage" else UNIFORM_COLOR
            ax.plot(ds, rows, color=color, marker=DESIGN_MARKERS.get(design, "o"),
                    linewidth=2, label=f"{design} / {method}")

        all_d = sorted({r.d for r in results})
        grid = np.linspace(min(all_d), max(all_d), 50) if len(all_d) > 1 else np.asarray(all_d, dtype=float)
        ax.plot(grid, [reference_rows(d, eps, c_reference) for d in grid], color=REFERENCE_COLOR,
                linestyle='--', linewidth=1.5, label=f'{c_reference:g} d ln d / eps^2')

        ax.set_title(title, color=TEXT_COLOR, fontsize=12, fontweight='bold')
        ax.set_xlabel("d", color=TEXT_COLOR)
        ax.set_ylabel("output rows", color=TEXT_COLOR)
        ax.grid(True, color=GRID_COLOR, linestyle=':', alpha=0.6)

        legend = ax.legend(loc='best', facecolor=CHART_BG_COLOR, edgecolor=GRID_COLOR, fontsize=8)
        for text in legend.get_texts():
            text.set_color(TEXT_COLOR)

        ax.tick_params(colors=TEXT_COLOR)
        for spine in ax.spines.values():
            spine.set_color(GRID_COLOR)

        plt.tight_layout()

        buf = io.BytesIO()
        plt.savefig(buf, format='png', facecolor=CHART_BG_COLOR, dpi=100)
        buf.seek(0)
        plt.close(fig)

        return buf.getvalue()

    except Exception as e:
        logger.error(f"Bench chart generation error: {e}")
        return None
