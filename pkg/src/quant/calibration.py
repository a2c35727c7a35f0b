"""
Post-training calibration: Min-Max activation quantizers and the per-channel
grid search for weight steps.
"""

import logging
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import DegenerateRangeError, InvalidArgumentError
from src.quant.quantizers import round_half_away
from src.quant.tensors import FloatTensor, QuantizerSpec, int_range

logger = logging.getLogger(__name__)

GRID_SIZE = 100
GRID_LOW = 0.2
GRID_HIGH = 1.2


def _stack_values(activations) -> np.ndarray:
    if isinstance(activations, FloatTensor):
        return activations.data.ravel()
    if isinstance(activations, np.ndarray):
        return activations.astype(np.float32).ravel()
    parts = [a.data.ravel() if isinstance(a, FloatTensor) else np.asarray(a, dtype=np.float32).ravel()
             for a in activations]
    if not parts:
        return np.empty(0, dtype=np.float32)
    return np.concatenate(parts)


def calibrate_minmax(activations: Union[FloatTensor, Iterable[FloatTensor]], bit_width: int = 8) -> QuantizerSpec:
    """
    Asymmetric per-tensor quantizer from the observed value range.

    s = (max - min) / (2^B - 1), z = -round(min / s). The zero point is in
    the unsigned domain; use QuantizerSpec.to_signed() before storing
    payloads in signed integers.

    Args:
        activations: One tensor or a batch of tensors
        bit_width: Target bit width B

    Returns:
        Asymmetric per-tensor QuantizerSpec
    """
    values = _stack_values(activations)
    if values.size == 0:
        raise DegenerateRangeError("no activations to calibrate on")
    lo = float(values.min())
    hi = float(values.max())
    return calibrate_from_range(lo, hi, bit_width)


def calibrate_from_range(lo: float, hi: float, bit_width: int = 8) -> QuantizerSpec:
    """Min-Max formulas on an already reduced (min, max) pair."""
    if not hi > lo:
        raise DegenerateRangeError(f"degenerate activation range [{lo}, {hi}]")
    levels = (1 << bit_width) - 1
    scale = (hi - lo) / levels
    # min / s evaluated as min * levels / (max - min) keeps exact ties exact
    zero_point = -int(round_half_away(lo * levels / (hi - lo)))
    return QuantizerSpec(bit_width=bit_width, symmetric=False, scale=scale, zero_point=zero_point)


def symmetric_minmax_step(w: np.ndarray, bit_width: int = 8) -> float:
    """max|w| / (2^(B-1) - 1); 1.0 for an all-zero filter."""
    amax = float(np.max(np.abs(w))) if np.size(w) else 0.0
    return amax / ((1 << (bit_width - 1)) - 1) if amax > 0.0 else 1.0


def default_weight_grid(minmax_step: float) -> np.ndarray:
    """100 candidates linearly spaced over [0.2, 1.2] x the min-max step."""
    return np.linspace(GRID_LOW * minmax_step, GRID_HIGH * minmax_step, GRID_SIZE)


def reconstruction_mse(w: np.ndarray, step: float, bit_width: int = 8) -> float:
    """Squared error of symmetric quantize -> dequantize at the given step."""
    lo, hi = int_range(bit_width)
    w = np.asarray(w, dtype=np.float64)
    q = np.clip(round_half_away(w / step), lo, hi)
    return float(np.sum((q * step - w) ** 2))


def search_weight_step(
    w: Union[FloatTensor, np.ndarray],
    grid: Optional[Sequence[float]] = None,
    bit_width: int = 8,
) -> Tuple[float, ...]:
    """
    Per-channel grid search for the weight step minimizing ||w_hat - w||.

    Args:
        w: Weights with filters along axis 0
        grid: Candidate steps shared by every filter; None uses the default
              grid around each filter's own min-max step
        bit_width: Weight bit width

    Returns:
        One step per filter; ties go to the smaller step
    """
    data = w.data if isinstance(w, FloatTensor) else np.asarray(w, dtype=np.float32)
    if data.ndim == 0:
        data = data.reshape(1, 1)
    elif data.ndim == 1:
        data = data.reshape(1, -1)

    if grid is not None:
        candidates = np.asarray(list(grid), dtype=np.float64)
        if candidates.size == 0:
            raise InvalidArgumentError("weight step grid is empty")
        if np.any(candidates <= 0) or not np.all(np.isfinite(candidates)):
            raise InvalidArgumentError("weight step grid must contain positive steps only")
        candidates = np.sort(candidates)

    steps = []
    for channel in data.reshape(data.shape[0], -1):
        channel_grid = candidates if grid is not None else default_weight_grid(
            symmetric_minmax_step(channel, bit_width))
        best_step = None
        best_err = None
        for step in channel_grid:
            err = reconstruction_mse(channel, float(step), bit_width)
            if best_err is None or err < best_err:
                best_step, best_err = float(step), err
        steps.append(best_step)

    logger.debug(f"Searched weight steps for {len(steps)} channels")
    return tuple(steps)
