from .layers import LayerSpec, causal_mask, conv_forward_int, conv_forward_float, accumulator_bound
from .graph import (
    OUTPUT_STEP,
    EntropyParams,
    FloatEntropyParams,
    LayerGraph,
    EntropyPathRunner,
    FloatPathRunner,
    quantize_symbols,
    forward_entropy_path,
    forward_entropy_path_float,
    forward_full_int,
    forward_full_float,
)
from .pipeline import collect_activation_ranges, quantize_graph, measure_drift, split_calibration_sample
from .toy import random_float_model

__all__ = [
    "LayerSpec", "causal_mask", "conv_forward_int", "conv_forward_float", "accumulator_bound",
    "OUTPUT_STEP", "EntropyParams", "FloatEntropyParams", "LayerGraph",
    "EntropyPathRunner", "FloatPathRunner", "quantize_symbols",
    "forward_entropy_path", "forward_entropy_path_float", "forward_full_int", "forward_full_float",
    "collect_activation_ranges", "quantize_graph", "measure_drift", "split_calibration_sample",
    "random_float_model",
]
