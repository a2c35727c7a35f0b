"""
Tensor containers and quantizer descriptions.

All containers are immutable after construction: their numpy payloads are
flagged read-only so they can be shared between threads.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from src.errors import InvalidQuantizerError, ShapeError

VALID_BIT_WIDTHS = (8, 16, 32)

Scale = Union[float, Tuple[float, ...]]


def int_range(bit_width: int) -> Tuple[int, int]:
    """Signed clip bounds [-2^(B-1), 2^(B-1)-1]."""
    return -(1 << (bit_width - 1)), (1 << (bit_width - 1)) - 1


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FloatTensor:
    """Full-precision tensor (float32, row-major)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if not np.all(np.isfinite(data)):
            raise ShapeError("FloatTensor values must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @classmethod
    def from_flat(cls, shape, values) -> "FloatTensor":
        values = np.asarray(values, dtype=np.float32).ravel()
        expected = int(np.prod(shape)) if len(shape) else 1
        if values.size != expected:
            raise ShapeError(f"{values.size} values do not fill shape {tuple(shape)}")
        return cls(values.reshape(tuple(shape)))


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    """
    Integer payload plus the metadata needed to dequantize it.

    Per-channel scales index axis 0 of the payload.
    """

    data: np.ndarray
    bit_width: int
    scale: Scale
    zero_point: int = 0
    symmetric: bool = True

    def __post_init__(self):
        if self.bit_width not in VALID_BIT_WIDTHS:
            raise InvalidQuantizerError(f"bit width must be one of {VALID_BIT_WIDTHS}, got {self.bit_width}")
        if self.symmetric and self.zero_point != 0:
            raise InvalidQuantizerError("symmetric tensors carry zero_point = 0")
        data = np.asarray(self.data, dtype=np.int64)
        lo, hi = int_range(self.bit_width)
        if data.size and (data.min() < lo or data.max() > hi):
            raise InvalidQuantizerError(f"payload exceeds the {self.bit_width}-bit range")
        if isinstance(self.scale, tuple):
            if data.ndim == 0 or len(self.scale) != data.shape[0]:
                raise ShapeError(f"{len(self.scale)} scales for {data.shape[0] if data.ndim else 0} channels")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def per_channel(self) -> bool:
        return isinstance(self.scale, tuple)

    def scale_array(self) -> np.ndarray:
        """Scale broadcastable against the payload."""
        if self.per_channel:
            return np.asarray(self.scale, dtype=np.float64).reshape((-1,) + (1,) * (self.data.ndim - 1))
        return np.asarray(self.scale, dtype=np.float64)


@dataclass(frozen=True)
class QuantizerSpec:
    """
    How a tensor is quantized.

    zero_point follows the storage convention of the tensor it is applied
    to; see to_signed() for activation quantizers coming out of Min-Max
    calibration.
    """

    bit_width: int
    symmetric: bool
    scale: Scale
    zero_point: int = 0
    granularity: str = "per_tensor"
    role: str = "activation"

    def __post_init__(self):
        if self.bit_width not in VALID_BIT_WIDTHS:
            raise InvalidQuantizerError(f"bit width must be one of {VALID_BIT_WIDTHS}, got {self.bit_width}")
        if self.granularity not in ("per_tensor", "per_channel"):
            raise InvalidQuantizerError(f"unknown granularity {self.granularity!r}")
        if self.role not in ("activation", "weight"):
            raise InvalidQuantizerError(f"unknown role {self.role!r}")
        if self.granularity == "per_channel":
            if self.role != "weight":
                raise InvalidQuantizerError("per-channel granularity is only permitted for weights")
            if not self.symmetric:
                raise InvalidQuantizerError("asymmetric quantization is only permitted per-tensor")
            object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
            scales = self.scale
        else:
            if isinstance(self.scale, (tuple, list)):
                raise InvalidQuantizerError("per-tensor quantizer takes a single scale")
            object.__setattr__(self, "scale", float(self.scale))
            scales = (self.scale,)
        if any(not (s > 0) or not np.isfinite(s) for s in scales):
            raise InvalidQuantizerError(f"scales must be positive and finite, got {self.scale}")
        if self.symmetric and self.zero_point != 0:
            raise InvalidQuantizerError("symmetric quantizers carry zero_point = 0")
        object.__setattr__(self, "zero_point", int(self.zero_point))

    def to_signed(self) -> "QuantizerSpec":
        """
        Shift a Min-Max zero point into signed B-bit storage.

        calibrate_minmax reports z for the unsigned range [0, 2^B - 1];
        stored payloads are signed, so z moves down by 2^(B-1).
        """
        if self.symmetric:
            return self
        return QuantizerSpec(
            bit_width=self.bit_width,
            symmetric=False,
            scale=self.scale,
            zero_point=self.zero_point - (1 << (self.bit_width - 1)),
            granularity=self.granularity,
            role=self.role,
        )

    def to_dict(self) -> dict:
        return {
            "bit_width": self.bit_width,
            "symmetric": self.symmetric,
            "scale": list(self.scale) if isinstance(self.scale, tuple) else self.scale,
            "zero_point": self.zero_point,
            "granularity": self.granularity,
            "role": self.role,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "QuantizerSpec":
        scale = payload["scale"]
        return cls(
            bit_width=int(payload["bit_width"]),
            symmetric=bool(payload["symmetric"]),
            scale=tuple(scale) if isinstance(scale, list) else float(scale),
            zero_point=int(payload["zero_point"]),
            granularity=payload.get("granularity", "per_tensor"),
            role=payload.get("role", "activation"),
        )
