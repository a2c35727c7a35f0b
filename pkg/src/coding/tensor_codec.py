"""
Tensor-level coding loop.

z_hat is coded first, channel by channel in raster order, each element
with the single-component factorized query of its channel. y_hat is then
coded position by position in raster order; at every position the entropy
path predicts (pi, mu, sigma) for all C_y channels from z_hat and the
symbols already coded, and the channels are coded in channel order.

Two parameter sources:
  mode="int"    integer-only path (bit-exact everywhere)
  mode="float"  float path at the given dtype, snapped to the 2^-6 grid;
                encoding and decoding with different dtypes reproduces the
                cross-platform mismatch the integer path removes
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.errors import ContractViolationError, DecodeUnderrunError, ShapeError, StreamCorruptionError
from src.coding.bitio import BitReader, BitWriter
from src.coding.cdf_tables import LutSet
from src.coding.gmm import build_query, factorized_query, gmm_decode_symbol, gmm_encode_symbol
from src.coding.range_coder import RangeDecoder, RangeEncoder, Trace, code_length_bits
from src.engine.graph import EntropyPathRunner, FloatPathRunner, LayerGraph
from src.quant.requant import INT32_MAX, INT32_MIN

logger = logging.getLogger(__name__)

MODES = ("int", "float")


@dataclass(frozen=True)
class CodingStats:
    symbols: int
    escapes: int
    main_bits: int
    hyper_bits: int
    escape_bits: int
    cross_entropy_bits: float

    @property
    def escape_rate(self) -> float:
        return self.escapes / self.symbols if self.symbols else 0.0


@dataclass(frozen=True)
class Bitstream:
    """In-memory coded tensor; the byte layout on disk belongs to src.data.formats."""

    z_shape: Tuple[int, int, int]
    y_shape: Tuple[int, int, int]
    hyper: bytes
    main: bytes
    escape: bytes
    escape_bits: int
    stats: Optional[CodingStats] = field(default=None, compare=False)

    def same_payload(self, other: "Bitstream") -> bool:
        return (self.z_shape == other.z_shape and self.y_shape == other.y_shape
                and self.hyper == other.hyper and self.main == other.main
                and self.escape == other.escape and self.escape_bits == other.escape_bits)


def cross_entropy_bits(trace: Trace) -> float:
    """Ideal code length of a sequence of coded intervals."""
    return float(sum(math.log2(total / (high - low)) for low, high, total in trace))


def _check_symbols(name: str, data, shape):
    data = np.asarray(data)
    if tuple(data.shape) != tuple(shape):
        raise ShapeError(f"{name} has shape {data.shape}, expected {tuple(shape)}")
    if not np.issubdtype(data.dtype, np.integer):
        raise ContractViolationError(f"{name} must hold integers")
    data = data.astype(np.int64)
    if data.size and (data.min() < INT32_MIN or data.max() > INT32_MAX):
        raise ContractViolationError(f"{name} holds values outside the int32 symbol range")
    return data


def _runner(graph: LayerGraph, z_hat, mode: str, kernel: str, dtype):
    if mode == "int":
        runner = EntropyPathRunner(graph, z_hat, kernel)
        return runner.at
    if mode == "float":
        runner = FloatPathRunner(graph, z_hat, dtype)
        return lambda y, position: runner.at(y, position).quantize()
    raise ContractViolationError(f"unknown coding mode {mode!r}; choose from {MODES}")


def _hyper_queries(graph: LayerGraph):
    return [factorized_query(i) for i in graph.hyper_sigma_indices]


def encode_tensor(
    graph: LayerGraph,
    luts: LutSet,
    z_hat,
    y_hat,
    kernel: str = "vectorized",
    mode: str = "int",
    dtype=np.float64,
    trace: Optional[Trace] = None,
) -> Bitstream:
    """
    Losslessly code (z_hat, y_hat).

    Args:
        graph: Quantized LayerGraph (float mode only reads its float weights)
        luts: CDF table set
        z_hat: Hyper symbols (C_z, H, W)
        y_hat: Latent symbols (C_y, H, W)
        kernel: Integer kernel for mode="int"
        mode: 'int' or 'float'
        dtype: Float dtype for mode="float"
        trace: Optional list receiving every coded (cum_low, cum_high, total)

    Returns:
        Bitstream with CodingStats attached
    """
    z_hat = _check_symbols("z_hat", z_hat, graph.hyper_shape)
    y_hat = _check_symbols("y_hat", y_hat, graph.latent_shape)
    intervals: Trace = []
    escapes = BitWriter()
    escaped = 0

    hyper_enc = RangeEncoder(trace=intervals)
    for channel, query in enumerate(_hyper_queries(graph)):
        for value in z_hat[channel].ravel().tolist():
            escaped += gmm_encode_symbol(value, query, hyper_enc, escapes, luts)
    hyper_bytes = hyper_enc.finish()
    hyper_intervals = len(intervals)

    predict = _runner(graph, z_hat, mode, kernel, dtype)
    main_enc = RangeEncoder(trace=intervals)
    for row, col in graph.positions():
        params = predict(y_hat, (row, col))
        for channel in range(graph.y_channels):
            query = build_query(params.q_pi[channel], params.q_mu[channel], params.q_sigma[channel])
            escaped += gmm_encode_symbol(int(y_hat[channel, row, col]), query, main_enc, escapes, luts)
    main_bytes = main_enc.finish()

    if trace is not None:
        trace.extend(intervals)
    stats = CodingStats(
        symbols=z_hat.size + y_hat.size,
        escapes=escaped,
        main_bits=code_length_bits(main_bytes),
        hyper_bits=code_length_bits(hyper_bytes),
        escape_bits=escapes.bit_count,
        cross_entropy_bits=cross_entropy_bits(intervals[hyper_intervals:]),
    )
    if escaped > 0.01 * stats.symbols:
        logger.warning(f"{escaped} of {stats.symbols} symbols took the escape path")
    return Bitstream(
        z_shape=graph.hyper_shape,
        y_shape=graph.latent_shape,
        hyper=hyper_bytes,
        main=main_bytes,
        escape=escapes.to_bytes(),
        escape_bits=escapes.bit_count,
        stats=stats,
    )


def decode_tensor(
    graph: LayerGraph,
    luts: LutSet,
    bitstream: Bitstream,
    kernel: str = "vectorized",
    mode: str = "int",
    dtype=np.float64,
    trace: Optional[Trace] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inverse of encode_tensor.

    Returns:
        (z_hat, y_hat) as int32 arrays
    """
    if tuple(bitstream.z_shape) != graph.hyper_shape or tuple(bitstream.y_shape) != graph.latent_shape:
        raise StreamCorruptionError(f"bitstream shapes {bitstream.z_shape}/{bitstream.y_shape} "
                                    f"do not match the model")
    escapes = BitReader(bitstream.escape, bitstream.escape_bits)

    hyper_dec = RangeDecoder(bitstream.hyper, trace=trace)
    z_hat = np.zeros(graph.hyper_shape, dtype=np.int64)
    per_channel = graph.height * graph.width
    for channel, query in enumerate(_hyper_queries(graph)):
        values = [gmm_decode_symbol(query, hyper_dec, escapes, luts) for _ in range(per_channel)]
        z_hat[channel] = np.asarray(values, dtype=np.int64).reshape(graph.height, graph.width)

    predict = _runner(graph, z_hat, mode, kernel, dtype)
    main_dec = RangeDecoder(bitstream.main, trace=trace)
    y_hat = np.zeros(graph.latent_shape, dtype=np.int64)
    for row, col in graph.positions():
        params = predict(y_hat, (row, col))
        for channel in range(graph.y_channels):
            query = build_query(params.q_pi[channel], params.q_mu[channel], params.q_sigma[channel])
            y_hat[channel, row, col] = gmm_decode_symbol(query, main_dec, escapes, luts)

    if escapes.remaining:
        raise StreamCorruptionError(f"{escapes.remaining} escape bits left unread")
    return z_hat.astype(np.int32), y_hat.astype(np.int32)


def try_decode(graph: LayerGraph, luts: LutSet, bitstream: Bitstream, **kwargs):
    """decode_tensor that reports failure as None instead of raising."""
    try:
        return decode_tensor(graph, luts, bitstream, **kwargs)
    except (StreamCorruptionError, DecodeUnderrunError, ValueError, OverflowError) as e:
        logger.debug(f"Decode failed: {e}")
        return None
