"""
The entropy-estimation path: hyper synthesis, context model and parameter
network wired together.

    hyper_synthesis(z_hat) --+
                             +-- concat --> param_net --> (pi, mu, sigma) x K
    context(y_hat_visible) --+

Both sub-network outputs have the latent resolution, so the parameter
network is a stack of 1x1 convolutions evaluated independently at every
spatial position. A position is a spatial coordinate (row, col); all C_y
channels of that position are predicted, and later coded, together.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.errors import ContractViolationError, IndexOutOfRangeError, ShapeError
from src.engine.layers import (
    LayerSpec,
    apply_activation_float,
    conv_forward_float,
    conv_forward_float_at,
    conv_forward_int,
    conv_forward_int_at,
    requant_layer,
)
from src.quant.quantizers import round_half_away
from src.quant.tensors import QuantizedTensor, QuantizerSpec, int_range

logger = logging.getLogger(__name__)

OUTPUT_STEP = 2.0 ** -6
OUTPUT_BITS = 16
MAX_COMPONENTS = 4
SYMBOL_SPEC = QuantizerSpec(bit_width=8, symmetric=True, scale=1.0)


@dataclass(frozen=True, eq=False)
class EntropyParams:
    """
    16-bit fixed-point mixture parameters, step 2^-6.

    Arrays share one shape whose last axis is the component index K:
    (C_y, K) for a single position, (C_y, H, W, K) for a whole tensor.
    """

    q_pi: np.ndarray
    q_mu: np.ndarray
    q_sigma: np.ndarray
    scale: float = OUTPUT_STEP

    def __post_init__(self):
        lo, hi = int_range(OUTPUT_BITS)
        arrays = []
        for name in ("q_pi", "q_mu", "q_sigma"):
            data = np.array(getattr(self, name), dtype=np.int64)
            if data.size and (data.min() < lo or data.max() > hi):
                raise ContractViolationError(f"{name} exceeds the 16-bit range")
            data.setflags(write=False)
            object.__setattr__(self, name, data)
            arrays.append(data)
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape):
            raise ShapeError("q_pi, q_mu and q_sigma must share one shape")

    @property
    def num_components(self) -> int:
        return int(self.q_pi.shape[-1])

    def at(self, row: int, col: int) -> "EntropyParams":
        """Slice one position out of whole-tensor params."""
        return EntropyParams(self.q_pi[:, row, col], self.q_mu[:, row, col],
                             self.q_sigma[:, row, col], self.scale)

    def dequantize(self) -> "FloatEntropyParams":
        return FloatEntropyParams(self.q_pi * self.scale, self.q_mu * self.scale,
                                  self.q_sigma * self.scale)

    def equals(self, other: "EntropyParams") -> bool:
        return (np.array_equal(self.q_pi, other.q_pi) and np.array_equal(self.q_mu, other.q_mu)
                and np.array_equal(self.q_sigma, other.q_sigma))


@dataclass(frozen=True, eq=False)
class FloatEntropyParams:
    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def at(self, row: int, col: int) -> "FloatEntropyParams":
        return FloatEntropyParams(self.pi[:, row, col], self.mu[:, row, col], self.sigma[:, row, col])

    def quantize(self) -> EntropyParams:
        """Snap onto the 16-bit 2^-6 grid the integer path emits."""
        lo, hi = int_range(OUTPUT_BITS)

        def snap(values):
            return np.clip(round_half_away(np.asarray(values, dtype=np.float64) / OUTPUT_STEP), lo, hi)

        return EntropyParams(snap(self.pi), snap(self.mu), snap(self.sigma))


@dataclass(frozen=True, eq=False)
class LayerGraph:
    """
    Topology, weights and geometry of the entropy path.

    An unquantized graph (float weights only) is the float model that
    calibration and PTQ start from; quantize_graph returns the same
    topology with integer state on every layer and the shared concat
    quantizer filled in.

    Attributes:
        hyper_sigma_indices: Per-channel sigma index of the factorized
            table that codes z_hat (shipped side information)
    """

    hyper_synthesis: Tuple[LayerSpec, ...]
    context: Tuple[LayerSpec, ...]
    param_net: Tuple[LayerSpec, ...]
    num_components: int
    z_channels: int
    y_channels: int
    height: int
    width: int
    hyper_sigma_indices: Tuple[int, ...]
    concat_spec: Optional[QuantizerSpec] = None
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for group in ("hyper_synthesis", "context", "param_net"):
            layers = tuple(getattr(self, group))
            if not layers:
                raise ContractViolationError(f"{group} needs at least one layer")
            object.__setattr__(self, group, layers)
        object.__setattr__(self, "hyper_sigma_indices", tuple(int(i) for i in self.hyper_sigma_indices))
        self._validate_topology()
        if self.is_quantized:
            self._validate_quantization()

    def _validate_topology(self):
        if not 1 <= self.num_components <= MAX_COMPONENTS:
            raise ContractViolationError(f"K must be in [1, {MAX_COMPONENTS}], got {self.num_components}")
        if len(self.hyper_sigma_indices) != self.z_channels:
            raise ShapeError(f"{len(self.hyper_sigma_indices)} hyper sigma indices for {self.z_channels} channels")
        if any(not 0 <= i <= 64 for i in self.hyper_sigma_indices):
            raise ContractViolationError("hyper sigma indices must lie in [0, 64]")

        _check_chain("hyper_synthesis", self.hyper_synthesis, self.z_channels)
        _check_chain("context", self.context, self.y_channels)
        _check_chain("param_net", self.param_net, self.concat_channels)

        for layer in self.hyper_synthesis + self.context:
            if layer.stride != 1 or layer.padding != layer.kernel_size[0] // 2:
                raise ContractViolationError(f"layer {layer.name} must keep the latent resolution")
        if self.context[0].kind != "masked_conv2d":
            raise ContractViolationError("the context model starts with a masked convolution")
        for layer in self.context[1:] + self.param_net:
            if layer.kind != "conv1x1":
                raise ContractViolationError(f"layer {layer.name} must be a 1x1 convolution")
        expected = 3 * self.num_components * self.y_channels
        if self.param_net[-1].out_channels != expected:
            raise ShapeError(f"param_net emits {self.param_net[-1].out_channels} channels, expected {expected}")

    def _validate_quantization(self):
        if self.concat_spec is None:
            raise ContractViolationError("quantized graph is missing its concat quantizer")
        for layer in (self.hyper_synthesis[-1], self.context[-1]):
            out = layer.requant[0]
            if out.out_scale != self.concat_spec.scale or out.out_zero_point != self.concat_spec.zero_point:
                raise ContractViolationError(f"layer {layer.name} does not emit the concat quantizer")
        final = self.param_net[-1].requant
        if any(p.bit_width != OUTPUT_BITS or p.out_scale != OUTPUT_STEP or p.out_zero_point != 0 for p in final):
            raise ContractViolationError("final layer must emit 16-bit symmetric values with step 2^-6")
        for layer in self.layers[:-1]:
            if layer.output_bit_width != 8:
                raise ContractViolationError(f"hidden layer {layer.name} must emit 8-bit values")

    @property
    def layers(self) -> Tuple[LayerSpec, ...]:
        return self.hyper_synthesis + self.context + self.param_net

    @property
    def concat_channels(self) -> int:
        return self.hyper_synthesis[-1].out_channels + self.context[-1].out_channels

    @property
    def is_quantized(self) -> bool:
        return all(layer.is_quantized for layer in self.layers)

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        return self.y_channels, self.height, self.width

    @property
    def hyper_shape(self) -> Tuple[int, int, int]:
        return self.z_channels, self.height, self.width

    def positions(self):
        """Spatial positions in raster order."""
        for row in range(self.height):
            for col in range(self.width):
                yield row, col


def _check_chain(group: str, layers, in_channels: int):
    for layer in layers:
        if layer.in_channels != in_channels:
            raise ShapeError(f"{group}: layer {layer.name} takes {layer.in_channels} channels, "
                             f"previous stage emits {in_channels}")
        in_channels = layer.out_channels


def quantize_symbols(symbols) -> QuantizedTensor:
    """Symbols enter the network through a step-1 symmetric 8-bit quantizer."""
    data = np.asarray(symbols)
    if not np.issubdtype(data.dtype, np.integer):
        raise ContractViolationError("symbol tensors must hold integers")
    lo, hi = int_range(SYMBOL_SPEC.bit_width)
    return QuantizedTensor(np.clip(data.astype(np.int64), lo, hi), 8, SYMBOL_SPEC.scale)


def _symbols_as_float(symbols, dtype) -> np.ndarray:
    lo, hi = int_range(SYMBOL_SPEC.bit_width)
    return np.clip(np.asarray(symbols, dtype=np.int64), lo, hi).astype(dtype)


def _check_shape(name: str, data: np.ndarray, expected: Tuple[int, int, int]):
    if tuple(np.shape(data)) != tuple(expected):
        raise ShapeError(f"{name} has shape {tuple(np.shape(data))}, expected {tuple(expected)}")


def _output_tensor(values: np.ndarray, layer: LayerSpec) -> QuantizedTensor:
    params = layer.requant[0]
    return QuantizedTensor(values, params.bit_width, params.out_scale, params.out_zero_point,
                           symmetric=params.out_zero_point == 0)


def _run_int(layers, q: QuantizedTensor, kernel: str) -> QuantizedTensor:
    for layer in layers:
        q = _output_tensor(requant_layer(conv_forward_int(q, layer, kernel), layer), layer)
    return q


def _run_float(layers, x: np.ndarray, dtype, record: Optional[dict] = None) -> np.ndarray:
    for layer in layers:
        x = apply_activation_float(conv_forward_float(x, layer, dtype), layer)
        if record is not None:
            record.setdefault(layer.name, []).append(x)
    return x


def _concat(graph: LayerGraph, hyper: QuantizedTensor, context: QuantizedTensor) -> QuantizedTensor:
    spec = graph.concat_spec
    return QuantizedTensor(np.concatenate([hyper.data, context.data], axis=0), spec.bit_width,
                           spec.scale, spec.zero_point, symmetric=spec.symmetric)


def _split(values: np.ndarray, graph: LayerGraph) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(3*C_y*K, ...) channel layout [pi, mu, sigma], channel c*K + k inside each block."""
    k, c = graph.num_components, graph.y_channels
    blocks = values.reshape((3, c, k) + values.shape[1:])
    blocks = np.moveaxis(blocks, 2, -1)
    return blocks[0], blocks[1], blocks[2]


def _check_position(graph: LayerGraph, position) -> Tuple[int, int]:
    row, col = (int(p) for p in position)
    if not (0 <= row < graph.height and 0 <= col < graph.width):
        raise IndexOutOfRangeError(f"position ({row}, {col}) outside {graph.height}x{graph.width}")
    return row, col


class EntropyPathRunner:
    """
    Per-position integer evaluation with the hyper branch computed once.

    The decoder calls at() once per position with the symbols decoded so
    far; the encoder makes the same calls with the final tensor, and the
    causal mask guarantees both see identical inputs.
    """

    def __init__(self, graph: LayerGraph, z_hat, kernel: str = "vectorized"):
        if not graph.is_quantized:
            raise ContractViolationError("integer execution needs a quantized graph")
        _check_shape("z_hat", z_hat, graph.hyper_shape)
        self.graph = graph
        self.kernel = kernel
        self.hyper = _run_int(graph.hyper_synthesis, quantize_symbols(z_hat), kernel)

    def at(self, y_visible, position) -> EntropyParams:
        graph = self.graph
        _check_shape("y_hat", y_visible, graph.latent_shape)
        row, col = _check_position(graph, position)

        first = graph.context[0]
        acc = conv_forward_int_at(quantize_symbols(y_visible), first, row, col, self.kernel)
        ctx = _output_tensor(requant_layer(acc[:, None, None], first), first)
        ctx = _run_int(graph.context[1:], ctx, self.kernel)

        hyper = self.hyper.data[:, row:row + 1, col:col + 1]
        spec = graph.concat_spec
        joint = QuantizedTensor(np.concatenate([hyper, ctx.data], axis=0), spec.bit_width,
                                spec.scale, spec.zero_point, symmetric=spec.symmetric)
        out = _run_int(graph.param_net, joint, self.kernel)
        q_pi, q_mu, q_sigma = _split(out.data[:, 0, 0], graph)
        return EntropyParams(q_pi, q_mu, q_sigma)


class FloatPathRunner:
    """Per-position float evaluation; the dtype stands in for the platform's float unit."""

    def __init__(self, graph: LayerGraph, z_hat, dtype=np.float64):
        _check_shape("z_hat", z_hat, graph.hyper_shape)
        self.graph = graph
        self.dtype = dtype
        self.hyper = _run_float(graph.hyper_synthesis, _symbols_as_float(z_hat, dtype), dtype)

    def at(self, y_visible, position) -> FloatEntropyParams:
        graph = self.graph
        _check_shape("y_hat", y_visible, graph.latent_shape)
        row, col = _check_position(graph, position)

        first = graph.context[0]
        u = conv_forward_float_at(_symbols_as_float(y_visible, self.dtype), first, row, col, self.dtype)
        ctx = _run_float(graph.context[1:], apply_activation_float(u, first)[:, None, None], self.dtype)
        joint = np.concatenate([self.hyper[:, row:row + 1, col:col + 1], ctx], axis=0)
        out = _run_float(graph.param_net, joint, self.dtype)
        pi, mu, sigma = _split(out[:, 0, 0], graph)
        return FloatEntropyParams(pi, mu, sigma)


def forward_entropy_path(graph: LayerGraph, z_hat, y_visible, position,
                         kernel: str = "vectorized") -> EntropyParams:
    """
    Integer-only entropy parameters at one position.

    Args:
        graph: Quantized LayerGraph
        z_hat: Decoded hyper latent (C_z, H, W)
        y_visible: Symbols decoded so far (C_y, H, W); entries at or after
            position in raster order are never read
        position: (row, col)
        kernel: 'vectorized' or 'reference'

    Returns:
        EntropyParams of shape (C_y, K)
    """
    return EntropyPathRunner(graph, z_hat, kernel).at(y_visible, position)


def forward_entropy_path_float(graph: LayerGraph, z_hat, y_visible, position,
                               dtype=np.float64) -> FloatEntropyParams:
    return FloatPathRunner(graph, z_hat, dtype).at(y_visible, position)


def forward_full_int(graph: LayerGraph, z_hat, y_hat, kernel: str = "vectorized") -> EntropyParams:
    """All positions at once, shape (C_y, H, W, K)."""
    if not graph.is_quantized:
        raise ContractViolationError("integer execution needs a quantized graph")
    _check_shape("z_hat", z_hat, graph.hyper_shape)
    _check_shape("y_hat", y_hat, graph.latent_shape)
    hyper = _run_int(graph.hyper_synthesis, quantize_symbols(z_hat), kernel)
    ctx = _run_int(graph.context, quantize_symbols(y_hat), kernel)
    out = _run_int(graph.param_net, _concat(graph, hyper, ctx), kernel)
    return EntropyParams(*_split(out.data, graph))


def forward_full_float(graph: LayerGraph, z_hat, y_hat, dtype=np.float64,
                       record: Optional[dict] = None) -> FloatEntropyParams:
    """
    Float reference over the whole tensor.

    Args:
        record: Optional dict collecting every layer's activated output
            by layer name (used for calibration)
    """
    _check_shape("z_hat", z_hat, graph.hyper_shape)
    _check_shape("y_hat", y_hat, graph.latent_shape)
    hyper = _run_float(graph.hyper_synthesis, _symbols_as_float(z_hat, dtype), dtype, record)
    ctx = _run_float(graph.context, _symbols_as_float(y_hat, dtype), dtype, record)
    out = _run_float(graph.param_net, np.concatenate([hyper, ctx], axis=0), dtype, record)
    return FloatEntropyParams(*_split(out, graph))
