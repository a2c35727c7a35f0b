"""
Post-training quantization of the entropy path.

calibrate -> report (DataFrame of per-layer activation ranges)
quantize  -> LayerGraph carrying integer weights, absorbed biases and
             per-channel RequantParams
"""

import logging
from typing import Iterable, Sequence, Tuple

import numpy as np
import pandas as pd

from src.errors import AccumulatorOverflowError, ContractViolationError, IngestError
from src.engine.graph import (
    OUTPUT_BITS,
    OUTPUT_STEP,
    SYMBOL_SPEC,
    LayerGraph,
    forward_full_float,
    forward_full_int,
)
from src.engine.layers import LayerSpec, accumulator_bound
from src.quant.calibration import calibrate_from_range, search_weight_step
from src.quant.quantizers import quantize_affine, round_half_away
from src.quant.requant import INT32_MAX, check_overflow, derive_requant
from src.quant.tensors import FloatTensor, QuantizerSpec

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["layer", "group", "min", "max", "count"]
Sample = Tuple[np.ndarray, np.ndarray]


def split_calibration_sample(graph: LayerGraph, tensor) -> Sample:
    """
    Calibration tensors stack z_hat and y_hat along channels: (C_z + C_y, H, W).

    Values are rounded onto the symbol grid on the way in.
    """
    data = tensor.data if isinstance(tensor, FloatTensor) else np.asarray(tensor, dtype=np.float32)
    expected = (graph.z_channels + graph.y_channels, graph.height, graph.width)
    if data.shape != expected:
        raise IngestError(f"calibration tensor has shape {data.shape}, expected {expected}")
    symbols = round_half_away(data)
    return symbols[:graph.z_channels], symbols[graph.z_channels:]


def _as_samples(graph: LayerGraph, batch) -> Sequence[Sample]:
    samples = []
    for item in batch:
        if isinstance(item, tuple):
            samples.append((np.asarray(item[0]), np.asarray(item[1])))
        else:
            samples.append(split_calibration_sample(graph, item))
    if not samples:
        raise IngestError("calibration batch is empty")
    return samples


def collect_activation_ranges(float_model: LayerGraph, batch: Iterable) -> pd.DataFrame:
    """
    Run the float model over a calibration batch and record activation ranges.

    Args:
        float_model: Unquantized (or quantized) LayerGraph; float weights are used
        batch: (z_hat, y_hat) pairs or stacked calibration tensors

    Returns:
        DataFrame with columns layer, group, min, max, count (one row per layer)
    """
    samples = _as_samples(float_model, batch)
    record = {}
    for z_hat, y_hat in samples:
        forward_full_float(float_model, z_hat, y_hat, dtype=np.float64, record=record)

    groups = {}
    for group in ("hyper_synthesis", "context", "param_net"):
        for layer in getattr(float_model, group):
            groups[layer.name] = group

    rows = []
    for layer in float_model.layers:
        values = np.concatenate([v.ravel() for v in record[layer.name]])
        rows.append({
            "layer": layer.name,
            "group": groups[layer.name],
            "min": float(values.min()),
            "max": float(values.max()),
            "count": int(values.size),
        })
    logger.info(f"Collected activation ranges for {len(rows)} layers over {len(samples)} samples")
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def _activation_spec(lo: float, hi: float, name: str) -> QuantizerSpec:
    # the range must contain real zero so that zero padding is representable
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi <= lo:
        logger.warning(f"Layer {name} never left zero during calibration; using range [0, 1]")
        hi = lo + 1.0
    return calibrate_from_range(lo, hi, 8).to_signed()


def _range_of(report: pd.DataFrame, name: str) -> Tuple[float, float]:
    rows = report[report["layer"] == name]
    if rows.empty:
        raise ContractViolationError(f"calibration report has no entry for layer {name}")
    return float(rows["min"].min()), float(rows["max"].max())


def _output_specs(graph: LayerGraph, report: pd.DataFrame):
    concat_lo, concat_hi = [], []
    for layer in (graph.hyper_synthesis[-1], graph.context[-1]):
        lo, hi = _range_of(report, layer.name)
        concat_lo.append(lo)
        concat_hi.append(hi)
    concat_spec = _activation_spec(min(concat_lo), max(concat_hi), "concat")

    outputs = {}
    for layer in graph.layers:
        if layer is graph.param_net[-1]:
            outputs[layer.name] = QuantizerSpec(bit_width=OUTPUT_BITS, symmetric=True, scale=OUTPUT_STEP)
        elif layer is graph.hyper_synthesis[-1] or layer is graph.context[-1]:
            outputs[layer.name] = concat_spec
        else:
            outputs[layer.name] = _activation_spec(*_range_of(report, layer.name), layer.name)
    return outputs, concat_spec


def _input_specs(graph: LayerGraph, outputs, concat_spec):
    inputs = {}
    for chain, first_spec in ((graph.hyper_synthesis, SYMBOL_SPEC), (graph.context, SYMBOL_SPEC),
                              (graph.param_net, concat_spec)):
        spec = first_spec
        for layer in chain:
            inputs[layer.name] = spec
            spec = outputs[layer.name]
    return inputs


def quantize_layer(layer: LayerSpec, in_spec: QuantizerSpec, out_spec: QuantizerSpec) -> LayerSpec:
    """
    Quantize one layer given its input and output activation quantizers.

    Weights: per-channel symmetric 8-bit, steps from the grid search.
    Bias: round(b / (s_W s_in)) - z_in * sum(Q_W), so the kernel can work on
    raw stored inputs. Requant: one RequantParams per output channel.
    """
    steps = search_weight_step(layer.weight, bit_width=8)
    weight_spec = QuantizerSpec(bit_width=8, symmetric=True, scale=steps,
                                granularity="per_channel", role="weight")
    weight_q = quantize_affine(layer.weight, weight_spec)

    s_in = float(in_spec.scale)
    z_in = int(in_spec.zero_point)
    s_w = np.asarray(steps, dtype=np.float64)
    tap_sums = weight_q.data.reshape(layer.out_channels, -1).sum(axis=1)
    bias_q = round_half_away(layer.bias.astype(np.float64) / (s_w * s_in)) - z_in * tap_sums

    leaky = layer.leaky_slope if layer.activation == "leaky_relu" else None
    requant = tuple(
        derive_requant(float(s), s_in, float(out_spec.scale), out_spec.zero_point,
                       bit_width=out_spec.bit_width, leaky_slope=leaky)
        for s in steps
    )
    quantized = layer.with_quantization(weight_q, bias_q, requant, z_in)

    bound = accumulator_bound(quantized)
    if bound > INT32_MAX:
        raise AccumulatorOverflowError(f"layer {layer.name}: worst-case accumulation {bound} exceeds int32")
    if not all(check_overflow(p) for p in requant):
        raise AccumulatorOverflowError(f"layer {layer.name}: dyadic product can leave int32")
    return quantized


def quantize_graph(float_model: LayerGraph, report: pd.DataFrame) -> LayerGraph:
    """
    PTQ of the whole entropy path.

    Args:
        float_model: Unquantized LayerGraph
        report: Output of collect_activation_ranges

    Returns:
        Quantized LayerGraph with the shared concat quantizer set
    """
    outputs, concat_spec = _output_specs(float_model, report)
    inputs = _input_specs(float_model, outputs, concat_spec)

    def convert(chain):
        return tuple(quantize_layer(layer, inputs[layer.name], outputs[layer.name]) for layer in chain)

    graph = LayerGraph(
        hyper_synthesis=convert(float_model.hyper_synthesis),
        context=convert(float_model.context),
        param_net=convert(float_model.param_net),
        num_components=float_model.num_components,
        z_channels=float_model.z_channels,
        y_channels=float_model.y_channels,
        height=float_model.height,
        width=float_model.width,
        hyper_sigma_indices=float_model.hyper_sigma_indices,
        concat_spec=concat_spec,
        metadata=dict(float_model.metadata),
    )
    logger.info(f"Quantized {len(graph.layers)} layers; concat quantizer "
                f"s={concat_spec.scale:.6g}, z={concat_spec.zero_point}")
    return graph


def measure_drift(graph: LayerGraph, batch: Iterable, kernel: str = "vectorized") -> pd.DataFrame:
    """
    |float param - dequantized integer param| over a batch.

    Returns:
        DataFrame indexed by parameter (pi, mu, sigma) with p50, p99, max
        in real units and max_steps in multiples of 2^-6
    """
    samples = _as_samples(graph, batch)
    diffs = {"pi": [], "mu": [], "sigma": []}
    for z_hat, y_hat in samples:
        ref = forward_full_float(graph, z_hat, y_hat, dtype=np.float64)
        out = forward_full_int(graph, z_hat, y_hat, kernel).dequantize()
        for name in diffs:
            diffs[name].append(np.abs(getattr(ref, name) - getattr(out, name)).ravel())

    rows = []
    for name, parts in diffs.items():
        values = np.concatenate(parts)
        rows.append({
            "param": name,
            "p50": float(np.percentile(values, 50)),
            "p99": float(np.percentile(values, 99)),
            "max": float(values.max()),
            "max_steps": float(values.max() / OUTPUT_STEP),
        })
    return pd.DataFrame(rows).set_index("param")
