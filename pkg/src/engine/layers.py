"""
Convolution layers of the entropy-estimation path.

A LayerSpec always carries its float weights; after quantization it also
carries the 8-bit per-channel weights, the int32 bias (input zero-point
term absorbed) and the per-channel RequantParams. Two interchangeable
integer kernels exist: 'vectorized' (numpy im2col + int64 matmul) and
'reference' (plain Python integer loops). They must agree bit for bit.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.errors import AccumulatorOverflowError, ContractViolationError, ShapeError
from src.quant.requant import INT32_MAX, INT32_MIN, RequantParams, requantize_channels
from src.quant.tensors import QuantizedTensor

LAYER_KINDS = ("conv2d", "masked_conv2d", "conv1x1")
ACTIVATIONS = ("identity", "relu", "leaky_relu")
KERNELS = ("vectorized", "reference")


def causal_mask(kernel_h: int, kernel_w: int) -> np.ndarray:
    """
    Raster-order mask that zeroes the centre tap and every later tap.

    Rows above the centre are fully visible; on the centre row only the
    taps to the left are.
    """
    mask = np.zeros((kernel_h, kernel_w), dtype=np.int64)
    ch, cw = kernel_h // 2, kernel_w // 2
    mask[:ch, :] = 1
    mask[ch, :cw] = 1
    return mask


@dataclass(frozen=True, eq=False)
class LayerSpec:
    name: str
    kind: str
    in_channels: int
    out_channels: int
    kernel_size: Tuple[int, int]
    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    activation: str = "identity"
    leaky_slope: float = 0.0
    # quantized state, filled in by the PTQ pipeline
    weight_q: Optional[QuantizedTensor] = None
    bias_q: Optional[np.ndarray] = None
    requant: Tuple[RequantParams, ...] = field(default_factory=tuple)
    in_zero_point: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ContractViolationError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ContractViolationError(f"unknown activation {self.activation!r}")
        weight = np.asarray(self.weight, dtype=np.float32)
        expected = (self.out_channels, self.in_channels) + tuple(self.kernel_size)
        if weight.shape != expected:
            raise ShapeError(f"layer {self.name}: weight shape {weight.shape}, expected {expected}")
        if self.kind == "conv1x1" and tuple(self.kernel_size) != (1, 1):
            raise ShapeError(f"layer {self.name}: conv1x1 needs a 1x1 kernel")
        bias = np.asarray(self.bias, dtype=np.float32)
        if bias.shape != (self.out_channels,):
            raise ShapeError(f"layer {self.name}: bias length {bias.shape} != {self.out_channels} outputs")
        if self.kind == "masked_conv2d":
            weight = (weight * self.mask).astype(np.float32)
        weight.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "kernel_size", tuple(int(k) for k in self.kernel_size))
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)
        if self.bias_q is not None:
            bias_q = np.asarray(self.bias_q, dtype=np.int64)
            if bias_q.shape != (self.out_channels,):
                raise ShapeError(f"layer {self.name}: integer bias length mismatch")
            bias_q.setflags(write=False)
            object.__setattr__(self, "bias_q", bias_q)
        if self.weight_q is not None and self.kind == "masked_conv2d":
            if np.any(self.weight_q.data * (1 - self.mask) != 0):
                raise ContractViolationError(f"layer {self.name}: masked taps carry weight")

    @property
    def mask(self) -> np.ndarray:
        if self.kind == "masked_conv2d":
            return causal_mask(*self.kernel_size)
        return np.ones(self.kernel_size, dtype=np.int64)

    @property
    def is_quantized(self) -> bool:
        return self.weight_q is not None and self.bias_q is not None and len(self.requant) > 0

    @property
    def output_bit_width(self) -> int:
        return self.requant[0].bit_width if self.requant else 8

    def with_quantization(self, weight_q, bias_q, requant, in_zero_point) -> "LayerSpec":
        return replace(self, weight_q=weight_q, bias_q=bias_q, requant=tuple(requant),
                       in_zero_point=int(in_zero_point))

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        kh, kw = self.kernel_size
        out_h = (height + 2 * self.padding - kh) // self.stride + 1
        out_w = (width + 2 * self.padding - kw) // self.stride + 1
        if out_h <= 0 or out_w <= 0:
            raise ShapeError(f"layer {self.name}: input {height}x{width} too small for its kernel")
        return out_h, out_w


def accumulator_bound(layer: LayerSpec, input_bits: int = 8) -> int:
    """Worst-case |accumulation| over all 8-bit inputs, per the integer weights and bias."""
    if not layer.is_quantized:
        raise ContractViolationError(f"layer {layer.name} is not quantized")
    max_input = 1 << (input_bits - 1)
    weights = np.abs(layer.weight_q.data.astype(np.int64)).reshape(layer.out_channels, -1)
    per_channel = max_input * weights.sum(axis=1) + np.abs(layer.bias_q)
    return int(per_channel.max())


# Integer kernels

def _im2col(padded: np.ndarray, kernel_size, stride) -> Tuple[np.ndarray, int, int]:
    kh, kw = kernel_size
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    out_h, out_w = windows.shape[1], windows.shape[2]
    columns = windows.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, -1)
    return columns, out_h, out_w


def _accumulate_vectorized(padded, weights, bias, stride):
    columns, out_h, out_w = _im2col(padded, weights.shape[2:], stride)
    flat = weights.reshape(weights.shape[0], -1)
    acc = columns @ flat.T + bias[None, :]
    return acc.T.reshape(weights.shape[0], out_h, out_w)


def _accumulate_reference(padded, weights, bias, stride):
    out_c, in_c, kh, kw = weights.shape
    out_h = (padded.shape[1] - kh) // stride + 1
    out_w = (padded.shape[2] - kw) // stride + 1
    w = weights.tolist()
    x = padded.tolist()
    out = np.zeros((out_c, out_h, out_w), dtype=np.int64)
    for o in range(out_c):
        for i in range(out_h):
            for j in range(out_w):
                total = int(bias[o])
                for c in range(in_c):
                    wc, xc = w[o][c], x[c]
                    for dy in range(kh):
                        row, wrow = xc[i * stride + dy], wc[dy]
                        for dx in range(kw):
                            total += wrow[dx] * row[j * stride + dx]
                out[o, i, j] = total
    return out


def _checked_int32(acc: np.ndarray, layer: LayerSpec) -> np.ndarray:
    if acc.size and (acc.min() < INT32_MIN or acc.max() > INT32_MAX):
        raise AccumulatorOverflowError(f"layer {layer.name}: accumulation left the int32 range")
    return acc.astype(np.int32)


def _integer_operands(input_q: QuantizedTensor, layer: LayerSpec):
    if not layer.is_quantized:
        raise ContractViolationError(f"layer {layer.name} is not quantized")
    if input_q.bit_width != 8:
        raise ContractViolationError(f"layer {layer.name} takes 8-bit inputs, got {input_q.bit_width}-bit")
    data = input_q.data
    if data.ndim != 3 or data.shape[0] != layer.in_channels:
        raise ShapeError(f"layer {layer.name}: {data.shape[0] if data.ndim else 0} input channels, "
                         f"expected {layer.in_channels}")
    weights = layer.weight_q.data.astype(np.int64) * layer.mask
    return data.astype(np.int64), weights, layer.bias_q.astype(np.int64)


def _pad(data: np.ndarray, padding: int, value) -> np.ndarray:
    if padding == 0:
        return data
    return np.pad(data, ((0, 0), (padding, padding), (padding, padding)), constant_values=value)


def conv_forward_int(input_q: QuantizedTensor, layer: LayerSpec, kernel: str = "vectorized") -> np.ndarray:
    """
    Integer convolution: sum(Q_W * q_v) + bias, accumulated into int32.

    Borders are padded with the input zero point (the integer image of real
    zero). Activation is not applied here; it is folded into requant_layer.

    Returns:
        int32 array (out_channels, H', W')
    """
    data, weights, bias = _integer_operands(input_q, layer)
    layer.output_size(data.shape[1], data.shape[2])
    padded = _pad(data, layer.padding, layer.in_zero_point)
    if kernel == "vectorized":
        acc = _accumulate_vectorized(padded, weights, bias, layer.stride)
    elif kernel == "reference":
        acc = _accumulate_reference(padded, weights, bias, layer.stride)
    else:
        raise ContractViolationError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    return _checked_int32(acc, layer)


def conv_forward_int_at(input_q: QuantizedTensor, layer: LayerSpec, row: int, col: int,
                        kernel: str = "vectorized") -> np.ndarray:
    """Single output location of conv_forward_int (stride-1 layers); shape (out_channels,)."""
    data, weights, bias = _integer_operands(input_q, layer)
    if layer.stride != 1:
        raise ContractViolationError(f"layer {layer.name}: point evaluation needs stride 1")
    kh, kw = layer.kernel_size
    padded = _pad(data, layer.padding, layer.in_zero_point)
    window = padded[:, row:row + kh, col:col + kw]
    if window.shape[1:] != (kh, kw):
        raise ShapeError(f"layer {layer.name}: position ({row}, {col}) outside the padded input")
    if kernel == "vectorized":
        acc = _accumulate_vectorized(window, weights, bias, 1)
    elif kernel == "reference":
        acc = _accumulate_reference(window, weights, bias, 1)
    else:
        raise ContractViolationError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    return _checked_int32(acc, layer)[:, 0, 0]


def requant_layer(acc: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Fold the activation into requantization: ReLU clamps the accumulation, Leaky picks a branch."""
    acc = np.asarray(acc, dtype=np.int64)
    if layer.activation == "relu":
        return requantize_channels(np.maximum(acc, 0), layer.requant)
    if layer.activation == "leaky_relu":
        return requantize_channels(acc, layer.requant, leaky=True)
    return requantize_channels(acc, layer.requant)


# Float reference

def conv_forward_float(x: np.ndarray, layer: LayerSpec, dtype=np.float64) -> np.ndarray:
    """Float convolution (zero padding) plus bias, activation not applied."""
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 3 or x.shape[0] != layer.in_channels:
        raise ShapeError(f"layer {layer.name}: float input shape {x.shape}")
    layer.output_size(x.shape[1], x.shape[2])
    padded = _pad(x, layer.padding, 0.0)
    weights = layer.weight.astype(dtype)
    return _accumulate_vectorized(padded, weights, layer.bias.astype(dtype), layer.stride)


def apply_activation_float(u: np.ndarray, layer: LayerSpec) -> np.ndarray:
    if layer.activation == "relu":
        return np.maximum(u, 0)
    if layer.activation == "leaky_relu":
        return np.where(u >= 0, u, u * u.dtype.type(layer.leaky_slope))
    return u


def conv_forward_float_at(x: np.ndarray, layer: LayerSpec, row: int, col: int, dtype=np.float64) -> np.ndarray:
    """Single output location of conv_forward_float (stride-1 layers); shape (out_channels,)."""
    x = np.asarray(x, dtype=dtype)
    kh, kw = layer.kernel_size
    padded = _pad(x, layer.padding, 0.0)
    window = padded[:, row:row + kh, col:col + kw]
    if window.shape[1:] != (kh, kw):
        raise ShapeError(f"layer {layer.name}: position ({row}, {col}) outside the padded input")
    weights = layer.weight.astype(dtype)
    return _accumulate_vectorized(window, weights, layer.bias.astype(dtype), 1)[:, 0, 0]
