from .tensors import FloatTensor, QuantizedTensor, QuantizerSpec, int_range
from .quantizers import round_half_away, quantize_affine, dequantize
from .calibration import calibrate_minmax, calibrate_from_range, search_weight_step
from .requant import RequantParams, derive_requant, requantize, requantize_leaky, requantize_channels

__all__ = [
    "FloatTensor", "QuantizedTensor", "QuantizerSpec", "int_range",
    "round_half_away", "quantize_affine", "dequantize",
    "calibrate_minmax", "calibrate_from_range", "search_weight_step",
    "RequantParams", "derive_requant", "requantize", "requantize_leaky", "requantize_channels",
]
