"""
Uniform affine quantization (UAQ) and its inverse.

Rounding everywhere in the engine is round-half-away-from-zero.
"""

from typing import Union

import numpy as np

from src.errors import InvalidQuantizerError, ShapeError
from src.quant.tensors import FloatTensor, QuantizedTensor, QuantizerSpec, int_range


def round_half_away(x) -> np.ndarray:
    """
    Round to nearest, ties away from zero.

    Splits off the integer part first so that values just below .5 never
    get pushed over by the addition.
    """
    x = np.asarray(x)
    if np.issubdtype(x.dtype, np.integer):
        return x.astype(np.int64)
    magnitude = np.abs(x.astype(np.float64))
    whole = np.floor(magnitude)
    rounded = whole + (magnitude - whole >= 0.5)
    return (np.sign(x) * rounded).astype(np.int64)


def quantize_affine(v: Union[FloatTensor, np.ndarray], spec: QuantizerSpec) -> QuantizedTensor:
    """
    q = clip(round(v / s) + z, -2^(B-1), 2^(B-1) - 1).

    Args:
        v: Full-precision tensor; per-channel specs quantize along axis 0
        spec: Quantizer description

    Returns:
        QuantizedTensor carrying the quantizer's metadata
    """
    data = v.data if isinstance(v, FloatTensor) else np.asarray(v, dtype=np.float32)
    if not np.all(np.isfinite(data)):
        raise InvalidQuantizerError("cannot quantize non-finite values")

    if spec.granularity == "per_channel":
        if data.ndim == 0 or data.shape[0] != len(spec.scale):
            raise ShapeError(
                f"{len(spec.scale)} per-channel scales for a tensor of shape {tuple(data.shape)}"
            )
        scale = np.asarray(spec.scale, dtype=np.float64).reshape((-1,) + (1,) * (data.ndim - 1))
    else:
        if not spec.scale > 0:
            raise InvalidQuantizerError(f"scale must be positive, got {spec.scale}")
        scale = np.float64(spec.scale)

    lo, hi = int_range(spec.bit_width)
    q = round_half_away(data.astype(np.float64) / scale) + spec.zero_point
    q = np.clip(q, lo, hi)
    return QuantizedTensor(
        data=q,
        bit_width=spec.bit_width,
        scale=spec.scale,
        zero_point=spec.zero_point,
        symmetric=spec.symmetric,
    )


def dequantize(q: QuantizedTensor) -> FloatTensor:
    """v_hat = s * q - s * z."""
    scale = q.scale_array()
    values = scale * q.data.astype(np.float64) - scale * q.zero_point
    return FloatTensor(values.astype(np.float32))
