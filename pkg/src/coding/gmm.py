"""
Deterministic Gaussian-mixture coding with the CDF tables.

The aggregate cumulative frequency of symbol y under a query is

    c(y) = sum_k q_pi[k] * C_k(y - floor_mu[k])

with C_k(p) = CDF_max for p >= R, 0 for p <= -R and the table entry
LUT[i_k][p + R] in between. Everything is integer arithmetic and stays
below 4 * 2^12 * 2^12 = 2^26.

Symbols whose cell is empty take the escape path: the placeholder symbol
lo = min floor_mu - R is range coded with [0, c(lo + 1)) and the true value
goes to the Golomb section.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.errors import ContractViolationError, StreamCorruptionError, ZeroProbabilityError
from src.coding.bitio import BitReader, BitWriter, golomb_decode, golomb_encode
from src.coding.cdf_tables import LutSet
from src.coding.discretize import NUM_SIGMA_LEVELS, mu_index_array, sigma_index_array
from src.coding.range_coder import RangeDecoder, RangeEncoder

logger = logging.getLogger(__name__)

MAX_WEIGHT = 1 << 12
MAX_COMPONENTS = 4


@dataclass(frozen=True)
class GmmQuery:
    """Per-component outer table index, floor(mu) and integer weight."""

    indices: Tuple[int, ...]
    floor_mu: Tuple[int, ...]
    weights: Tuple[int, ...]

    def __post_init__(self):
        k = len(self.indices)
        if not 1 <= k <= MAX_COMPONENTS or len(self.floor_mu) != k or len(self.weights) != k:
            raise ContractViolationError(f"query needs 1..{MAX_COMPONENTS} components of equal length")
        if any(not 0 <= w <= MAX_WEIGHT for w in self.weights) or not any(self.weights):
            raise ContractViolationError("weights must lie in [0, 4096] and not all be zero")

    @property
    def num_components(self) -> int:
        return len(self.indices)

    def total(self, cdf_max: int) -> int:
        return sum(self.weights) * cdf_max


def derive_mixture_weights(q_pi) -> Tuple[int, ...]:
    """Clip raw 16-bit weights to [0, 4096]; an all-zero vector becomes uniform ones."""
    weights = np.clip(np.asarray(q_pi, dtype=np.int64), 0, MAX_WEIGHT)
    if not weights.any():
        logger.warning("All mixture weights clipped to zero; using uniform weights")
        weights = np.ones_like(weights)
    return tuple(int(w) for w in weights)


def build_query(q_pi, q_mu, q_sigma) -> GmmQuery:
    """
    Discretize one element's K components into a GmmQuery.

    Args:
        q_pi, q_mu, q_sigma: Length-K 16-bit integer parameter vectors
    """
    i_sigma = sigma_index_array(q_sigma)
    floor_mu, i_mu = mu_index_array(q_mu)
    indices = i_mu * NUM_SIGMA_LEVELS + i_sigma
    return GmmQuery(
        indices=tuple(int(i) for i in indices),
        floor_mu=tuple(int(f) for f in floor_mu),
        weights=derive_mixture_weights(q_pi),
    )


def factorized_query(i_sigma: int) -> GmmQuery:
    """Single-component zero-mean query used for the hyper latent."""
    return GmmQuery(indices=(int(i_sigma),), floor_mu=(0,), weights=(1,))


def symbol_bounds(query: GmmQuery, lut_range: int) -> Tuple[int, int]:
    """(min floor_mu - R, max floor_mu + R) over components with non-zero weight."""
    active = [f for f, w in zip(query.floor_mu, query.weights) if w > 0]
    return min(active) - lut_range, max(active) + lut_range


def gmm_cdf_index(y: int, query: GmmQuery, luts: LutSet) -> int:
    """Aggregate cumulative frequency of symbol y (mass strictly below y)."""
    rows = luts.rows()
    lut_range, cdf_max = luts.lut_range, luts.cdf_max
    c = 0
    for index, floor_mu, weight in zip(query.indices, query.floor_mu, query.weights):
        p = y - floor_mu
        if p >= lut_range:
            c += weight * cdf_max
        elif p > -lut_range:
            c += weight * rows[index][p + lut_range]
    return c


def _placeholder_high(query: GmmQuery, luts: LutSet, lo: int) -> int:
    high = gmm_cdf_index(lo + 1, query, luts)
    return high if high > 0 else 1


def gmm_encode_symbol(y: int, query: GmmQuery, encoder: RangeEncoder, escapes: BitWriter,
                      luts: LutSet) -> bool:
    """
    Code one symbol; returns True when it took the escape path.

    Escape when c(y) == 0 (y <= lo), c(y) == total (y >= hi) or the cell
    [c(y), c(y+1)) is empty (gap between far-apart components).
    """
    y = int(y)
    total = query.total(luts.cdf_max)
    lo, _ = symbol_bounds(query, luts.lut_range)
    c_y = gmm_cdf_index(y, query, luts)
    c_next = gmm_cdf_index(y + 1, query, luts) if c_y < total else total
    if c_y == 0 or c_y == total or c_y == c_next:
        golomb_encode(escapes, y)
        encoder.encode(0, _placeholder_high(query, luts, lo), total)
        return True
    encoder.encode(c_y, c_next, total)
    return False


def find_symbol(target: int, query: GmmQuery, luts: LutSet) -> int:
    """Largest y in [lo, hi - 1] with c(y) <= target, by binary search."""
    lo, hi = symbol_bounds(query, luts.lut_range)
    left, right = lo, hi - 1
    while left < right:
        mid = (left + right + 1) // 2
        if gmm_cdf_index(mid, query, luts) <= target:
            left = mid
        else:
            right = mid - 1
    return left


def find_symbol_linear(target: int, query: GmmQuery, luts: LutSet) -> int:
    """Linear-scan reference for find_symbol."""
    lo, hi = symbol_bounds(query, luts.lut_range)
    y = lo
    while y + 1 <= hi - 1 and gmm_cdf_index(y + 1, query, luts) <= target:
        y += 1
    return y


def gmm_decode_symbol(query: GmmQuery, decoder: RangeDecoder, escapes: BitReader,
                      luts: LutSet) -> int:
    total = query.total(luts.cdf_max)
    lo, _ = symbol_bounds(query, luts.lut_range)
    target = decoder.decode_target(total)
    y = find_symbol(target, query, luts)
    c_y = gmm_cdf_index(y, query, luts)
    # cells starting at 0 are never coded directly; only the placeholder starts there
    if y == lo or c_y == 0:
        decoder.decode_update(0, _placeholder_high(query, luts, lo), total)
        return golomb_decode(escapes)
    c_next = gmm_cdf_index(y + 1, query, luts)
    if not c_y <= target < c_next:
        raise StreamCorruptionError(f"no cell brackets target {target}")
    if c_y == c_next:
        raise ZeroProbabilityError(f"symbol {y} has an empty cell")
    decoder.decode_update(c_y, c_next, total)
    return y


def symbol_probability(y: int, query: GmmQuery, luts: LutSet) -> float:
    """Probability the coder actually spends on y (escape mass for escaped symbols)."""
    total = query.total(luts.cdf_max)
    lo, _ = symbol_bounds(query, luts.lut_range)
    c_y = gmm_cdf_index(y, query, luts)
    c_next = gmm_cdf_index(y + 1, query, luts) if c_y < total else total
    if c_y == 0 or c_y == total or c_y == c_next:
        return _placeholder_high(query, luts, lo) / total
    return (c_next - c_y) / total
