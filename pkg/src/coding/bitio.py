"""
MSB-first bit packing and the exponential-Golomb escape code.
"""

from typing import List, Optional

from src.errors import ContractViolationError, DecodeUnderrunError, StreamCorruptionError

# zigzag of an int32 escape fits in 32 bits, so its prefix never exceeds 32 zeros
MAX_GOLOMB_PREFIX = 32


class BitWriter:
    """Accumulates bits; to_bytes() pads the last byte with zeros."""

    def __init__(self):
        self._bits: List[int] = []

    def __len__(self) -> int:
        return len(self._bits)

    @property
    def bit_count(self) -> int:
        return len(self._bits)

    def write_bit(self, bit: int):
        self._bits.append(1 if bit else 0)

    def write_uint(self, value: int, bits: int):
        """Writes value in exactly `bits` bits, most significant first."""
        for shift in range(bits - 1, -1, -1):
            self._bits.append((value >> shift) & 1)

    def write_ue(self, value: int):
        """Unsigned order-0 exponential-Golomb: value + 1 in 2 * len - 1 bits."""
        if value < 0:
            raise ValueError(f"unsigned Golomb value must be non-negative, got {value}")
        self.write_uint(value + 1, (value + 1).bit_length() * 2 - 1)

    def to_bytes(self) -> bytes:
        out = bytearray((len(self._bits) + 7) // 8)
        for pos, bit in enumerate(self._bits):
            if bit:
                out[pos >> 3] |= 0x80 >> (pos & 7)
        return bytes(out)


class BitReader:
    """
    Reads bits back in writing order.

    Reading past bit_count raises DecodeUnderrunError; read_bit_padded()
    instead returns zeros for the arithmetic decoder's look-ahead.
    """

    def __init__(self, data: bytes, bit_count: Optional[int] = None):
        self.data = bytes(data)
        self.bit_count = len(self.data) * 8 if bit_count is None else int(bit_count)
        if self.bit_count > len(self.data) * 8 or self.bit_count < 0:
            raise StreamCorruptionError(f"{self.bit_count} bits announced, {len(self.data) * 8} available")
        self.position = 0
        self.padding_read = 0

    @property
    def remaining(self) -> int:
        return self.bit_count - self.position

    def read_bit(self) -> int:
        if self.position >= self.bit_count:
            raise DecodeUnderrunError(f"bitstream exhausted after {self.bit_count} bits")
        pos = self.position
        self.position += 1
        return (self.data[pos >> 3] >> (7 - (pos & 7))) & 1

    def read_bit_padded(self) -> int:
        if self.position >= self.bit_count:
            self.padding_read += 1
            return 0
        return self.read_bit()

    def read_uint(self, bits: int) -> int:
        value = 0
        for _ in range(bits):
            value = (value << 1) | self.read_bit()
        return value

    def read_ue(self) -> int:
        zeros = 0
        while not self.read_bit():
            zeros += 1
            if zeros > MAX_GOLOMB_PREFIX:
                raise StreamCorruptionError(f"exponential-Golomb prefix longer than {MAX_GOLOMB_PREFIX} bits")
        return ((1 << zeros) | self.read_uint(zeros)) - 1


def zigzag(v: int) -> int:
    """0 -> 0, -1 -> 1, 1 -> 2, -2 -> 3, ..."""
    return 2 * v if v >= 0 else -2 * v - 1


def unzigzag(u: int) -> int:
    return u >> 1 if u % 2 == 0 else -((u + 1) >> 1)


def golomb_encode(writer: BitWriter, v: int):
    """Signed escape value: zigzag, then order-0 exponential-Golomb."""
    v = int(v)
    if not -(1 << 31) <= v < (1 << 31):
        raise ContractViolationError(f"escape value {v} is outside the int32 symbol range")
    writer.write_ue(zigzag(v))


def golomb_decode(reader: BitReader) -> int:
    return unzigzag(reader.read_ue())
