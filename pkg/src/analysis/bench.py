"""
Latency of the sigma discretizers on identical inputs.
"""

import logging
import time
from pathlib import Path
from typing import Callable, Union

import numpy as np
import pandas as pd

from src.coding.discretize import (
    SIGMA_Q_MAX,
    SIGMA_Q_MIN,
    STEP,
    comparison_table,
    natural_log_sigma_index,
    natural_log_table,
    sigma_index_array,
    sigma_index_compare_vectorized,
    sigma_index_loop_oracle,
)

logger = logging.getLogger(__name__)


def _best_time(func: Callable, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def bench_discretize(n: int = 1_000_000, seed: int = 0, loop_sample: int = 20_000,
                     repeats: int = 3) -> pd.DataFrame:
    """
    Time every discretizer over the same random 16-bit sigmas.

    Args:
        n: Number of inputs
        seed: RNG seed
        loop_sample: The loop comparison runs on this many inputs; its time
            is scaled to n
        repeats: Best-of repeats per method

    Returns:
        DataFrame (method, n, total_s, us_per_element)
    """
    rng = np.random.default_rng(seed)
    q = rng.integers(SIGMA_Q_MIN, SIGMA_Q_MAX + 1, size=n, dtype=np.int64)
    sample = q[:min(loop_sample, n)]
    table = comparison_table()
    log_table = natural_log_table()
    sigma = q * STEP

    timings = [
        ("calculation", n, _best_time(lambda: sigma_index_array(q), repeats)),
        ("comparison (vectorized)", n, _best_time(lambda: sigma_index_compare_vectorized(q, table), repeats)),
        ("comparison (loop)", sample.size, _best_time(lambda: sigma_index_loop_oracle(sample, table), 1)),
        ("natural log (vectorized)", n, _best_time(lambda: natural_log_sigma_index(sigma, log_table), repeats)),
    ]

    rows = []
    for method, count, seconds in timings:
        per_element = seconds / count
        rows.append({
            "method": method,
            "n": n,
            "total_s": per_element * n,
            "us_per_element": per_element * 1e6,
        })
        logger.info(f"{method}: {per_element * 1e6:.4f} us/element")
    return pd.DataFrame(rows)


def plot_latency(report: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Bar chart of per-element latency."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.barh(report["method"], report["us_per_element"], color="tab:blue")
    ax.set_xscale("log")
    ax.set_xlabel("microseconds per element")
    ax.set_title(f"Sigma discretization latency (n={int(report['n'].iloc[0])})")
    ax.grid(True, axis="x", alpha=0.3)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
