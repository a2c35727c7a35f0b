"""
Entropy-parameter discretization: 16-bit (mu, sigma) to LUT indices.

sigma: 65 binary-log levels. Nine major levels 2^i * sigma_min
(i = 0..8) with seven linearly interpolated minors between neighbours.
The index is computed from integer bit tricks only:

    q  = clip(q_sigma, 8, 2048)
    b  = floor(log2 q)              # leading-zero ladder
    i  = b - 3
    e1 = 1 << b
    e2 = 1 << (b - 3)
    j  = (q - e1 + e2 - 1) // e2    # round-up division
    index = 8 * i + j

mu: the decimal part of mu on the 2^-6 grid is its own level, so
floor_mu = q_mu // 64 and index = q_mu - 64 * floor_mu.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from src.errors import DomainError, IndexOutOfRangeError

SIGMA_MIN = 0.125
SIGMA_MAX = 32.0
STEP = 2.0 ** -6
MAJOR_LEVELS = 9
MINORS_PER_MAJOR = 8
NUM_SIGMA_LEVELS = (MAJOR_LEVELS - 1) * MINORS_PER_MAJOR + 1
NUM_MU_LEVELS = 64
SIGMA_Q_MIN = 8
SIGMA_Q_MAX = 2048

# natural-log baseline table
NATURAL_LOG_LEVELS = 64
NATURAL_LOG_MIN = 0.11
NATURAL_LOG_MAX = 256.0


@dataclass(frozen=True)
class DiscretizationConfig:
    sigma_min: float = SIGMA_MIN
    sigma_max: float = SIGMA_MAX
    major_levels: int = MAJOR_LEVELS
    minors_per_major: int = MINORS_PER_MAJOR
    step: float = STEP
    q_sigma_min: int = SIGMA_Q_MIN
    q_sigma_max: int = SIGMA_Q_MAX
    mu_levels: int = NUM_MU_LEVELS

    def to_dict(self) -> dict:
        return {
            "sigma_min": self.sigma_min, "sigma_max": self.sigma_max,
            "major_levels": self.major_levels, "minors_per_major": self.minors_per_major,
            "step": self.step, "q_sigma_min": self.q_sigma_min, "q_sigma_max": self.q_sigma_max,
            "mu_levels": self.mu_levels,
        }


@dataclass(frozen=True)
class SigmaIndex:
    major: int
    minor: int

    @property
    def index(self) -> int:
        return MINORS_PER_MAJOR * self.major + self.minor

    @classmethod
    def from_index(cls, index: int) -> "SigmaIndex":
        if not 0 <= index < NUM_SIGMA_LEVELS:
            raise IndexOutOfRangeError(f"sigma index {index} outside [0, {NUM_SIGMA_LEVELS - 1}]")
        return cls(index // MINORS_PER_MAJOR, index % MINORS_PER_MAJOR)


@dataclass(frozen=True)
class MuIndex:
    floor_mu: int
    index: int


def int_log2(q: int) -> int:
    """floor(log2 q) for 1 <= q < 2^32 with a five-step binary search."""
    q = int(q)
    if q <= 0 or q >= (1 << 32):
        raise DomainError(f"int_log2 needs a positive 32-bit integer, got {q}")
    b = 0
    for shift in (16, 8, 4, 2, 1):
        if q >> shift:
            q >>= shift
            b += shift
    return b


def int_log2_array(q) -> np.ndarray:
    """Element-wise int_log2 on a numpy integer array (same ladder, no floats)."""
    q = np.asarray(q, dtype=np.int64)
    if q.size and (q.min() <= 0 or q.max() >= (1 << 32)):
        raise DomainError("int_log2 needs positive 32-bit integers")
    b = np.zeros_like(q)
    for shift in (16, 8, 4, 2, 1):
        hit = (q >> shift) > 0
        q = np.where(hit, q >> shift, q)
        b = b + np.where(hit, shift, 0)
    return b


def sigma_index(q_sigma: int) -> SigmaIndex:
    """Binary-log discretization with interpolation of one 16-bit sigma."""
    q = min(max(int(q_sigma), SIGMA_Q_MIN), SIGMA_Q_MAX)
    b = int_log2(q)
    e1 = 1 << b
    e2 = 1 << (b - 3)
    j = (q - e1 + e2 - 1) // e2
    # j == 8 stays as is and aliases the next major level
    return SigmaIndex(b - 3, j)


def sigma_index_array(q_sigma) -> np.ndarray:
    """Vectorized sigma_index returning the combined indices."""
    q = np.clip(np.asarray(q_sigma, dtype=np.int64), SIGMA_Q_MIN, SIGMA_Q_MAX)
    b = int_log2_array(q)
    e1 = np.left_shift(1, b)
    e2 = np.left_shift(1, b - 3)
    j = (q - e1 + e2 - 1) // e2
    return MINORS_PER_MAJOR * (b - 3) + j


def sigma_reconstruct(idx: Union[SigmaIndex, int]) -> float:
    """sigma_min * (2^i + j * 2^(i-3)); offline and testing use only."""
    if not isinstance(idx, SigmaIndex):
        idx = SigmaIndex.from_index(int(idx))
    return SIGMA_MIN * (math.ldexp(1.0, idx.major) + idx.minor * math.ldexp(1.0, idx.major - 3))


def sigma_levels() -> np.ndarray:
    """All 65 reconstruction levels, ascending."""
    return np.array([sigma_reconstruct(i) for i in range(NUM_SIGMA_LEVELS)], dtype=np.float64)


def mu_index(q_mu: int) -> MuIndex:
    q = int(q_mu)
    floor_mu = q // NUM_MU_LEVELS
    return MuIndex(floor_mu, q - NUM_MU_LEVELS * floor_mu)


def mu_index_array(q_mu):
    """Vectorized mu_index: (floor_mu, index) arrays."""
    q = np.asarray(q_mu, dtype=np.int64)
    floor_mu = np.floor_divide(q, NUM_MU_LEVELS)
    return floor_mu, q - NUM_MU_LEVELS * floor_mu


# Comparison-based discretizers

def comparison_table() -> np.ndarray:
    """Lower cell edges for the comparison rule: levels 0..63."""
    return sigma_levels()[:-1]


def sigma_index_oracle(q_sigma: int, table=None) -> int:
    """
    Comparison discretizer: the first level at or above the dequantized sigma.

    Counts how many of the 64 levels 0..63 lie strictly below s * q, which
    is the round-up cell rule the calculation above realises.
    """
    table = comparison_table() if table is None else np.asarray(table, dtype=np.float64)
    q = min(max(int(q_sigma), SIGMA_Q_MIN), SIGMA_Q_MAX)
    return int(np.count_nonzero(table < q * STEP))


def sigma_index_compare_vectorized(q_sigma, table=None) -> np.ndarray:
    """Comparison discretizer over a whole array: one broadcast comparison per level."""
    table = comparison_table() if table is None else np.asarray(table, dtype=np.float64)
    sigma = np.clip(np.asarray(q_sigma, dtype=np.int64), SIGMA_Q_MIN, SIGMA_Q_MAX) * STEP
    index = np.zeros(sigma.shape, dtype=np.int64)
    for level in table:
        index += sigma > level
    return index


def sigma_index_loop_oracle(q_sigma, table=None) -> np.ndarray:
    """Comparison discretizer with explicit Python loops (slowest variant)."""
    table = comparison_table() if table is None else np.asarray(table, dtype=np.float64)
    levels = table.tolist()
    flat = np.asarray(q_sigma, dtype=np.int64).ravel().tolist()
    out = []
    for q in flat:
        sigma = min(max(q, SIGMA_Q_MIN), SIGMA_Q_MAX) * STEP
        count = 0
        for level in levels:
            if level < sigma:
                count += 1
            else:
                break
        out.append(count)
    return np.asarray(out, dtype=np.int64).reshape(np.shape(q_sigma))


def natural_log_table(levels: int = NATURAL_LOG_LEVELS, lo: float = NATURAL_LOG_MIN,
                      hi: float = NATURAL_LOG_MAX) -> np.ndarray:
    """Scale table spaced uniformly in log(sigma)."""
    return np.exp(np.linspace(math.log(lo), math.log(hi), levels))


def natural_log_sigma_index(sigma, table=None) -> np.ndarray:
    """
    Baseline float discretization over the natural-log table.

    index = number of table entries (last excluded) strictly below sigma,
    so values under the first entry map to 0 and values above the last
    map to the top index. Benchmark and tests only.
    """
    table = natural_log_table() if table is None else np.asarray(table, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    index = np.zeros(sigma.shape, dtype=np.int64)
    for level in table[:-1]:
        index += sigma > level
    return index


# Level inspection

def level_table() -> pd.DataFrame:
    """The 65 sigma levels with their major / minor decomposition."""
    rows = []
    for index in range(NUM_SIGMA_LEVELS):
        idx = SigmaIndex.from_index(index)
        sigma = sigma_reconstruct(idx)
        rows.append({
            "major": idx.major,
            "minor": idx.minor,
            "index": index,
            "sigma": sigma,
            "q_sigma": int(round(sigma / STEP)),
            "is_major": idx.minor == 0,
        })
    return pd.DataFrame(rows)


def plot_levels(path: Union[str, Path]) -> Path:
    """Render the binary-log levels against the natural-log baseline."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    table = level_table()
    baseline = natural_log_table()
    fig, ax = plt.subplots(figsize=(10, 5))
    minors = table[~table["is_major"]]
    majors = table[table["is_major"]]
    ax.semilogy(minors["index"], minors["sigma"], "o", color="tab:blue", markersize=4,
                label="interpolated minor levels")
    ax.semilogy(majors["index"], majors["sigma"], "s", color="tab:red", markersize=7,
                label="major levels 2^i * sigma_min")
    ax.semilogy(np.arange(baseline.size), baseline, "-", color="gray", alpha=0.6,
                label="natural-log baseline (64 levels)")
    ax.set_xlabel("index")
    ax.set_ylabel("sigma")
    ax.set_title("Sigma discretization levels")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
