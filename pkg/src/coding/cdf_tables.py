"""
Offline construction of the discretized-Gaussian CDF lookup tables.

One table per (sigma level, mu decimal level) pair: 65 x 64 = 4160 tables,
stored mu-major (index = i_mu * 65 + i_sigma). Each table has 2R + 2
cumulative frequencies:

    entries[0]        = 0
    entries[k]        = round(CDF_max * Phi((k - R - 0.5 - i_mu / 64) / sigma_hat)),  0 < k < 2R
    entries[2R]       = CDF_max
    entries[2R + 1]   = CDF_max (reserved end-of-stream slot)

entries[p + R] is the mass strictly below symbol p (relative to floor(mu)),
so symbol p owns [entries[p + R], entries[p + R + 1]). Rounded values are
repaired so every symbol in [-R, R) keeps a frequency of at least one.

Float math is fine here: tables are built once and shipped, never rebuilt
on the coding path.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import ndtr

from src.errors import IndexOutOfRangeError, InvalidArgumentError
from src.coding.discretize import NUM_MU_LEVELS, NUM_SIGMA_LEVELS, sigma_levels
from src.quant.quantizers import round_half_away

logger = logging.getLogger(__name__)

DEFAULT_RANGE = 64
DEFAULT_CDF_MAX = 1 << 12
NUM_TABLES = NUM_SIGMA_LEVELS * NUM_MU_LEVELS
ERF_TAG = "scipy.ndtr"


def lut_index(i_sigma: int, i_mu: int) -> int:
    return i_mu * NUM_SIGMA_LEVELS + i_sigma


def _check_config(lut_range: int, cdf_max: int):
    if lut_range < 4:
        raise InvalidArgumentError(f"R must be at least 4, got {lut_range}")
    if not 2 * lut_range <= cdf_max < (1 << 16):
        raise InvalidArgumentError(f"CDF_max must lie in [2R, 65535], got {cdf_max} for R={lut_range}")


def _repair(entries: np.ndarray, cdf_max: int) -> np.ndarray:
    """
    Force entries[0] = 0, entries[2R] = CDF_max and strict growth in between.

    Forward sweep: entries[k] >= entries[k-1] + 1. Backward sweep:
    entries[k] <= entries[k+1] - 1 down from CDF_max. Both are running
    max / min of entries[k] - k. Rows that need no repair stay untouched.
    """
    last = entries.shape[-1] - 1
    offsets = np.arange(entries.shape[-1], dtype=np.int64)
    entries = entries.copy()
    entries[..., 0] = 0
    entries[..., last] = cdf_max
    shifted = np.maximum.accumulate(entries - offsets, axis=-1)
    shifted[..., last] = cdf_max - last
    shifted = np.flip(np.minimum.accumulate(np.flip(shifted, axis=-1), axis=-1), axis=-1)
    return shifted + offsets


def _cdf_rows(sigmas: np.ndarray, mu_levels: np.ndarray, lut_range: int, cdf_max: int) -> np.ndarray:
    """Tables for every (mu level, sigma) pair of the inputs, mu-major; shape (M, S, 2R + 2)."""
    k = np.arange(2 * lut_range + 1, dtype=np.float64)
    mu_dec = mu_levels.astype(np.float64) / NUM_MU_LEVELS
    upper = k[None, None, :] - lut_range - 0.5 - mu_dec[:, None, None]
    raw = round_half_away(cdf_max * ndtr(upper / sigmas[None, :, None]))
    repaired = _repair(raw, cdf_max)
    reserved = np.full(repaired.shape[:-1] + (1,), cdf_max, dtype=np.int64)
    return np.concatenate([repaired, reserved], axis=-1)


@dataclass(frozen=True, eq=False)
class CdfLut:
    i_sigma: int
    i_mu: int
    entries: np.ndarray

    @property
    def index(self) -> int:
        return lut_index(self.i_sigma, self.i_mu)

    def frequencies(self) -> np.ndarray:
        """Per-symbol frequencies of the 2R codable symbols."""
        return np.diff(self.entries[:-1])


class LutSet:
    """
    The complete table set plus its configuration.

    Tables are held as one read-only uint16 array (4160, 2R + 2); rows()
    exposes them as nested Python lists for the scalar coding loop.
    """

    def __init__(self, tables: np.ndarray, lut_range: int = DEFAULT_RANGE,
                 cdf_max: int = DEFAULT_CDF_MAX, erf_tag: str = ERF_TAG):
        _check_config(lut_range, cdf_max)
        tables = np.array(tables, dtype=np.uint16)
        expected = (NUM_TABLES, 2 * lut_range + 2)
        if tables.shape != expected:
            raise InvalidArgumentError(f"table array has shape {tables.shape}, expected {expected}")
        tables.setflags(write=False)
        self.tables = tables
        self.lut_range = int(lut_range)
        self.cdf_max = int(cdf_max)
        self.erf_tag = erf_tag
        self._rows: Optional[List[List[int]]] = None

    def __len__(self) -> int:
        return self.tables.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LutSet):
            return NotImplemented
        return (self.lut_range == other.lut_range and self.cdf_max == other.cdf_max
                and self.erf_tag == other.erf_tag and np.array_equal(self.tables, other.tables))

    def table(self, i_sigma: int, i_mu: int) -> CdfLut:
        if not (0 <= i_sigma < NUM_SIGMA_LEVELS and 0 <= i_mu < NUM_MU_LEVELS):
            raise IndexOutOfRangeError(f"no table for (i_sigma={i_sigma}, i_mu={i_mu})")
        return CdfLut(i_sigma, i_mu, self.tables[lut_index(i_sigma, i_mu)].astype(np.int64))

    def rows(self) -> List[List[int]]:
        if self._rows is None:
            self._rows = self.tables.astype(np.int64).tolist()
        return self._rows

    def serialize(self) -> bytes:
        """Table payload as little-endian u16, table after table."""
        return self.tables.astype("<u2").tobytes()


def build_gaussian_cdf(i_sigma: int, i_mu: int, lut_range: int = DEFAULT_RANGE,
                       cdf_max: int = DEFAULT_CDF_MAX) -> CdfLut:
    """
    One discretized Gaussian CDF table.

    Args:
        i_sigma: Sigma level 0..64
        i_mu: Mu decimal level 0..63
        lut_range: R; symbols -R..R-1 around floor(mu) are codable
        cdf_max: Frequency total of the table

    Returns:
        CdfLut of length 2R + 2
    """
    if not (0 <= i_sigma < NUM_SIGMA_LEVELS and 0 <= i_mu < NUM_MU_LEVELS):
        raise IndexOutOfRangeError(f"no table for (i_sigma={i_sigma}, i_mu={i_mu})")
    _check_config(lut_range, cdf_max)
    sigma = sigma_levels()[i_sigma:i_sigma + 1]
    rows = _cdf_rows(sigma, np.array([i_mu]), lut_range, cdf_max)
    return CdfLut(i_sigma, i_mu, rows[0, 0])


def build_all_luts(lut_range: int = DEFAULT_RANGE, cdf_max: int = DEFAULT_CDF_MAX) -> LutSet:
    """All 4160 tables, mu level outer and sigma level inner."""
    _check_config(lut_range, cdf_max)
    rows = _cdf_rows(sigma_levels(), np.arange(NUM_MU_LEVELS), lut_range, cdf_max)
    tables = rows.reshape(NUM_TABLES, 2 * lut_range + 2)
    logger.info(f"Built {tables.shape[0]} CDF tables (R={lut_range}, CDF_max={cdf_max})")
    return LutSet(tables, lut_range, cdf_max)
