"""
Tests for the range coder, the escape code and the tensor coding loop.
"""

import math
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent))

import numpy as np
import pytest

from src.errors import (
    ContractViolationError,
    DecodeUnderrunError,
    InvalidArgumentError,
    StreamCorruptionError,
    ZeroWidthIntervalError,
)
from src.coding.bitio import BitReader, BitWriter, golomb_decode, golomb_encode, unzigzag, zigzag
from src.coding.cdf_tables import lut_index
from src.coding.gmm import (
    GmmQuery,
    find_symbol,
    find_symbol_linear,
    gmm_cdf_index,
    gmm_decode_symbol,
    gmm_encode_symbol,
    symbol_bounds,
    symbol_probability,
)
from src.coding.range_coder import MAX_TOTAL, RangeDecoder, RangeEncoder
from src.coding.tensor_codec import Bitstream, decode_tensor, encode_tensor, try_decode
from test_acceptance import random_query


def code_frequencies(symbols, freqs):
    cum = np.concatenate([[0], np.cumsum(freqs)]).tolist()
    total = cum[-1]
    enc = RangeEncoder()
    for s in symbols:
        enc.encode(cum[s], cum[s + 1], total)
    data = enc.finish()
    dec = RangeDecoder(data)
    out = []
    for _ in symbols:
        target = dec.decode_target(total)
        s = int(np.searchsorted(cum, target, side="right")) - 1
        dec.decode_update(cum[s], cum[s + 1], total)
        out.append(s)
    return data, out


# Range coder

def test_certain_event_costs_almost_nothing():
    enc = RangeEncoder()
    for _ in range(1000):
        enc.encode(0, 100, 100)
    assert len(enc.finish()) <= 2


def test_random_round_trip():
    rng = np.random.default_rng(0)
    freqs = rng.integers(1, 500, size=40)
    symbols = rng.integers(0, 40, size=3000).tolist()
    _, decoded = code_frequencies(symbols, freqs)
    assert decoded == symbols


def test_skewed_round_trip_near_entropy():
    rng = np.random.default_rng(1)
    freqs = np.array([4000, 60, 20, 10, 5, 1])
    probs = freqs / freqs.sum()
    symbols = rng.choice(len(freqs), size=20000, p=probs).tolist()
    data, decoded = code_frequencies(symbols, freqs)
    assert decoded == symbols
    ideal = sum(-math.log2(probs[s]) for s in symbols)
    assert 8 * len(data) <= ideal * 1.01 + 32


def test_large_totals_round_trip():
    rng = np.random.default_rng(3)
    freqs = rng.integers(1, 1 << 20, size=64)
    assert freqs.sum() <= MAX_TOTAL
    symbols = rng.integers(0, 64, size=2000).tolist()
    assert code_frequencies(symbols, freqs)[1] == symbols


def test_interval_validation():
    enc = RangeEncoder()
    with pytest.raises(ZeroWidthIntervalError):
        enc.encode(5, 5, 10)
    with pytest.raises(InvalidArgumentError):
        enc.encode(0, 11, 10)
    with pytest.raises(InvalidArgumentError):
        enc.encode(0, 1, MAX_TOTAL + 1)


def test_finish_is_idempotent():
    enc = RangeEncoder()
    enc.encode(3, 7, 10)
    assert enc.finish() == enc.finish()


def test_decoder_underrun_on_empty_payload():
    dec = RangeDecoder(b"")
    with pytest.raises(DecodeUnderrunError):
        for _ in range(100):
            target = dec.decode_target(2)
            dec.decode_update(target, target + 1, 2)


# Escape code

@pytest.mark.parametrize("value, bits", [(0, "1"), (1, "011"), (-1, "010"), (2, "00101"), (-2, "00100")])
def test_golomb_codewords(value, bits):
    writer = BitWriter()
    golomb_encode(writer, value)
    reader = BitReader(writer.to_bytes(), writer.bit_count)
    assert "".join(str(reader.read_bit()) for _ in range(writer.bit_count)) == bits


def test_golomb_sweep():
    writer = BitWriter()
    values = list(range(-1000, 1001)) + [2 ** 31 - 1, -(2 ** 31)]
    for v in values:
        golomb_encode(writer, v)
    reader = BitReader(writer.to_bytes(), writer.bit_count)
    assert [golomb_decode(reader) for _ in values] == values
    assert reader.remaining == 0


def test_zigzag_order():
    assert [zigzag(v) for v in (0, -1, 1, -2, 2)] == [0, 1, 2, 3, 4]
    assert [unzigzag(u) for u in range(5)] == [0, -1, 1, -2, 2]


def test_golomb_underrun():
    writer = BitWriter()
    golomb_encode(writer, 300)
    reader = BitReader(writer.to_bytes(), writer.bit_count - 3)
    with pytest.raises(DecodeUnderrunError):
        golomb_decode(reader)


def test_bit_reader_rejects_overlong_count():
    with pytest.raises(StreamCorruptionError):
        BitReader(b"\x00", 9)


def test_golomb_rejects_values_outside_int32():
    writer = BitWriter()
    for v in (2 ** 31, -(2 ** 31) - 1, 2 ** 33 + 5):
        with pytest.raises(ContractViolationError):
            golomb_encode(writer, v)
    assert writer.bit_count == 0


def test_golomb_prefix_is_capped():
    # 33 zeros cannot start the codeword of any int32 value
    writer = BitWriter()
    writer.write_uint(1, 34)
    with pytest.raises(StreamCorruptionError):
        golomb_decode(BitReader(writer.to_bytes(), writer.bit_count))


# Symbol coding

def mixture(luts):
    return GmmQuery(indices=(lut_index(10, 0), lut_index(10, 0)), floor_mu=(0, 200), weights=(3, 1))


def round_trip_symbols(symbols, query, luts):
    escapes = BitWriter()
    enc = RangeEncoder()
    flags = [gmm_encode_symbol(y, query, enc, escapes, luts) for y in symbols]
    dec = RangeDecoder(enc.finish())
    reader = BitReader(escapes.to_bytes(), escapes.bit_count)
    decoded = [gmm_decode_symbol(query, dec, reader, luts) for _ in symbols]
    return flags, decoded, reader


def test_escape_branches(luts):
    query = mixture(luts)
    lo, hi = symbol_bounds(query, luts.lut_range)
    # below, at and above the window, plus a gap symbol between the two components
    symbols = [lo - 50, lo, hi, hi + 999, 100, 0, 1, -1, 200, 199]
    flags, decoded, reader = round_trip_symbols(symbols, query, luts)
    assert decoded == symbols
    assert flags[:5] == [True] * 5
    assert flags[5:] == [False] * 5
    assert reader.remaining == 0


def test_escape_next_to_a_single_count_cell(luts):
    # narrowest table: the repaired tail gives lo + 1 a frequency of one,
    # so the placeholder interval is [0, 1)
    query = GmmQuery(indices=(lut_index(0, 0),), floor_mu=(0,), weights=(1,))
    lo, _ = symbol_bounds(query, luts.lut_range)
    assert gmm_cdf_index(lo + 1, query, luts) == 1
    symbols = [lo, lo - 3, 0, lo + 1, 5]
    flags, decoded, _ = round_trip_symbols(symbols, query, luts)
    assert decoded == symbols
    assert flags == [True, True, False, False, False]


def test_binary_search_matches_linear_scan(luts):
    query = mixture(luts)
    total = query.total(luts.cdf_max)
    for target in list(range(0, total, 97)) + [total - 1]:
        assert find_symbol(target, query, luts) == find_symbol_linear(target, query, luts)


def test_binary_search_matches_linear_scan_on_random_queries(luts):
    rng = np.random.default_rng(23)
    for _ in range(10_000):
        query = random_query(rng)
        target = int(rng.integers(0, query.total(luts.cdf_max)))
        assert find_symbol(target, query, luts) == find_symbol_linear(target, query, luts)


def test_symbol_probability_sums_to_one_over_window(luts):
    query = GmmQuery(indices=(lut_index(40, 7),), floor_mu=(2,), weights=(5,))
    lo, hi = symbol_bounds(query, luts.lut_range)
    direct = sum(symbol_probability(y, query, luts) for y in range(lo + 1, hi))
    assert direct == pytest.approx(1.0 - symbol_probability(lo, query, luts))


def test_encoder_and_decoder_traces_agree(toy_graph, toy_source, luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    enc_trace, dec_trace = [], []
    stream = encode_tensor(toy_graph, luts, z_hat, y_hat, trace=enc_trace)
    decode_tensor(toy_graph, luts, stream, trace=dec_trace)
    assert enc_trace == dec_trace


# Tensor coding

def test_tensor_round_trip(toy_graph, toy_source, luts):
    for z_hat, y_hat in toy_source.fetch(3):
        stream = encode_tensor(toy_graph, luts, z_hat, y_hat)
        z_out, y_out = decode_tensor(toy_graph, luts, stream)
        assert np.array_equal(z_out, z_hat) and np.array_equal(y_out, y_hat)
        assert z_out.dtype == np.int32


def test_stats_are_consistent(toy_graph, toy_source, luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    stats = encode_tensor(toy_graph, luts, z_hat, y_hat).stats
    assert stats.symbols == z_hat.size + y_hat.size
    assert stats.main_bits >= stats.cross_entropy_bits - 1
    assert stats.main_bits <= stats.cross_entropy_bits * 1.05 + 64


def test_encoding_is_byte_identical(toy_graph, toy_source, luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    first = encode_tensor(toy_graph, luts, z_hat, y_hat)
    second = encode_tensor(toy_graph, luts, z_hat, y_hat, kernel="reference")
    assert first.same_payload(second)


def test_all_escape_tensor(toy_graph, luts):
    z_hat = np.full(toy_graph.hyper_shape, 30000, dtype=np.int32)
    y_hat = np.full(toy_graph.latent_shape, -30000, dtype=np.int32)
    stream = encode_tensor(toy_graph, luts, z_hat, y_hat)
    assert stream.stats.escapes == z_hat.size + y_hat.size
    z_out, y_out = decode_tensor(toy_graph, luts, stream)
    assert np.array_equal(z_out, z_hat) and np.array_equal(y_out, y_hat)


def test_small_range_tables_code_losslessly(toy_graph, toy_source, small_luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    stream = encode_tensor(toy_graph, small_luts, z_hat, y_hat)
    z_out, y_out = decode_tensor(toy_graph, small_luts, stream)
    assert np.array_equal(z_out, z_hat) and np.array_equal(y_out, y_hat)


def test_float_mode_round_trip_same_dtype(toy_graph, toy_source, luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    stream = encode_tensor(toy_graph, luts, z_hat, y_hat, mode="float", dtype=np.float64)
    z_out, y_out = decode_tensor(toy_graph, luts, stream, mode="float", dtype=np.float64)
    assert np.array_equal(y_out, y_hat)


def test_decode_rejects_other_model_geometry(toy_graph, toy_source, luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    stream = encode_tensor(toy_graph, luts, z_hat, y_hat)
    bad = Bitstream((1, 1, 1), stream.y_shape, stream.hyper, stream.main, stream.escape, stream.escape_bits)
    with pytest.raises(StreamCorruptionError):
        decode_tensor(toy_graph, luts, bad)


def test_truncated_main_section_fails(toy_graph, toy_source, luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    stream = encode_tensor(toy_graph, luts, z_hat, y_hat)
    cut = Bitstream(stream.z_shape, stream.y_shape, stream.hyper, b"", stream.escape, stream.escape_bits)
    result = try_decode(toy_graph, luts, cut)
    assert result is None or not np.array_equal(result[1], y_hat)


def test_int32_edge_symbols_round_trip(toy_graph, luts):
    z_hat = np.zeros(toy_graph.hyper_shape, dtype=np.int64)
    y_hat = np.zeros(toy_graph.latent_shape, dtype=np.int64)
    y_hat[0, 0, 0] = 2 ** 31 - 1
    y_hat[-1, -1, -1] = -(2 ** 31)
    z_out, y_out = decode_tensor(toy_graph, luts, encode_tensor(toy_graph, luts, z_hat, y_hat))
    assert np.array_equal(y_out, y_hat) and np.array_equal(z_out, z_hat)


def test_symbols_wider_than_int32_are_rejected(toy_graph, luts):
    z_hat = np.zeros(toy_graph.hyper_shape, dtype=np.int64)
    y_hat = np.zeros(toy_graph.latent_shape, dtype=np.int64)
    y_hat[0, 0, 0] = 2 ** 33 + 5
    with pytest.raises(ContractViolationError):
        encode_tensor(toy_graph, luts, z_hat, y_hat)
    z_hat[0, 0, 0] = -(2 ** 31) - 1
    with pytest.raises(ContractViolationError):
        encode_tensor(toy_graph, luts, z_hat, np.zeros(toy_graph.latent_shape, dtype=np.int64))


def test_shape_and_dtype_checks(toy_graph, luts):
    z_hat = np.zeros(toy_graph.hyper_shape, dtype=np.int32)
    with pytest.raises(ValueError):
        encode_tensor(toy_graph, luts, z_hat, np.zeros((1, 2, 2), dtype=np.int32))
    with pytest.raises(ValueError):
        encode_tensor(toy_graph, luts, z_hat, np.zeros(toy_graph.latent_shape, dtype=np.float32))


def test_unknown_mode(toy_graph, toy_source, luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    with pytest.raises(ValueError):
        encode_tensor(toy_graph, luts, z_hat, y_hat, mode="fixed")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
