"""
Integer arithmetic coder with 32-bit low/high registers.

Classic bitwise renormalization with underflow (pending) bits. After every
update the interval width stays above a quarter of the register range
(2^30), so any frequency total up to 2^30 is coded exactly; GMM totals stay
below 2^26.
"""

from typing import List, Optional, Tuple

from src.errors import InvalidArgumentError, StreamCorruptionError, ZeroWidthIntervalError, DecodeUnderrunError
from src.coding.bitio import BitReader, BitWriter

STATE_BITS = 32
FULL_RANGE = 1 << STATE_BITS
HALF_RANGE = FULL_RANGE >> 1
QUARTER_RANGE = HALF_RANGE >> 1
STATE_MASK = FULL_RANGE - 1
MAX_TOTAL = QUARTER_RANGE

Trace = List[Tuple[int, int, int]]


def _check_interval(cum_low: int, cum_high: int, total: int):
    if cum_low >= cum_high:
        raise ZeroWidthIntervalError(f"empty interval [{cum_low}, {cum_high})")
    if cum_low < 0 or cum_high > total or total > MAX_TOTAL:
        raise InvalidArgumentError(f"interval [{cum_low}, {cum_high}) invalid for total {total}")


class RangeEncoder:
    """
    Encoder side of the coder state.

    Args:
        writer: Destination bits; a fresh BitWriter when omitted
        trace: Optional list receiving every (cum_low, cum_high, total)
    """

    def __init__(self, writer: Optional[BitWriter] = None, trace: Optional[Trace] = None):
        self.writer = writer if writer is not None else BitWriter()
        self.trace = trace
        self.low = 0
        self.high = STATE_MASK
        self.pending = 0
        self.finished = False

    def _emit(self, bit: int):
        self.writer.write_bit(bit)
        for _ in range(self.pending):
            self.writer.write_bit(bit ^ 1)
        self.pending = 0

    def encode(self, cum_low: int, cum_high: int, total: int):
        _check_interval(cum_low, cum_high, total)
        if self.trace is not None:
            self.trace.append((cum_low, cum_high, total))
        width = self.high - self.low + 1
        self.high = self.low + width * cum_high // total - 1
        self.low = self.low + width * cum_low // total

        while True:
            if self.high < HALF_RANGE:
                self._emit(0)
            elif self.low >= HALF_RANGE:
                self._emit(1)
                self.low -= HALF_RANGE
                self.high -= HALF_RANGE
            elif self.low >= QUARTER_RANGE and self.high < HALF_RANGE + QUARTER_RANGE:
                self.pending += 1
                self.low -= QUARTER_RANGE
                self.high -= QUARTER_RANGE
            else:
                break
            self.low = (self.low << 1) & STATE_MASK
            self.high = ((self.high << 1) & STATE_MASK) | 1

    def finish(self) -> bytes:
        """Two disambiguating bits (plus pending) so any continuation decodes correctly."""
        if not self.finished:
            self.pending += 1
            self._emit(0 if self.low < QUARTER_RANGE else 1)
            self.finished = True
        return self.writer.to_bytes()


class RangeDecoder:
    """
    Decoder side: decode_target(total) then decode_update(cum_low, cum_high, total).

    Missing trailing bits read as zeros, up to one register width; reading
    further means the stream was cut short.
    """

    def __init__(self, data: bytes, trace: Optional[Trace] = None):
        self.reader = BitReader(data)
        self.trace = trace
        self.low = 0
        self.high = STATE_MASK
        self.code = 0
        for _ in range(STATE_BITS):
            self.code = (self.code << 1) | self._next_bit()

    def _next_bit(self) -> int:
        bit = self.reader.read_bit_padded()
        if self.reader.padding_read > STATE_BITS:
            raise DecodeUnderrunError("range-coded payload ended early")
        return bit

    def decode_target(self, total: int) -> int:
        if not 0 < total <= MAX_TOTAL:
            raise InvalidArgumentError(f"total {total} outside (0, {MAX_TOTAL}]")
        width = self.high - self.low + 1
        offset = self.code - self.low
        target = ((offset + 1) * total - 1) // width
        if not 0 <= target < total:
            raise StreamCorruptionError(f"decoder target {target} outside [0, {total})")
        return target

    def decode_update(self, cum_low: int, cum_high: int, total: int):
        _check_interval(cum_low, cum_high, total)
        if self.trace is not None:
            self.trace.append((cum_low, cum_high, total))
        width = self.high - self.low + 1
        self.high = self.low + width * cum_high // total - 1
        self.low = self.low + width * cum_low // total
        if not self.low <= self.code <= self.high:
            raise StreamCorruptionError("code value left the coding interval")

        while True:
            if self.high < HALF_RANGE:
                pass
            elif self.low >= HALF_RANGE:
                self.low -= HALF_RANGE
                self.high -= HALF_RANGE
                self.code -= HALF_RANGE
            elif self.low >= QUARTER_RANGE and self.high < HALF_RANGE + QUARTER_RANGE:
                self.low -= QUARTER_RANGE
                self.high -= QUARTER_RANGE
                self.code -= QUARTER_RANGE
            else:
                break
            self.low = (self.low << 1) & STATE_MASK
            self.high = ((self.high << 1) & STATE_MASK) | 1
            self.code = ((self.code << 1) & STATE_MASK) | self._next_bit()


def code_length_bits(data: bytes) -> int:
    """Bits a finished range-coded section occupies on disk."""
    return 8 * len(data)
