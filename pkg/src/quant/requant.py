"""
Offline-constrained integer-arithmetic-only requantization.

The float factor m = s_W * s_v / s_next is only used offline to derive the
dyadic constants; at run time a layer output is

    clip(RID(m0 * clip(acc + p_u, q_min, q_max), 2^n), -2^(B-1), 2^(B-1) - 1)

with n = 32 - B and m0 = floor(2^n * m). Clipping before scaling bounds
every product m0 * q to the signed 32-bit range.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import (
    ContractViolationError,
    DegenerateRequantError,
    InvalidArgumentError,
    InvalidScaleError,
)
from src.quant.tensors import QuantizedTensor, int_range

INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1


@dataclass(frozen=True)
class NegativeBranch:
    """Dyadic constants for the folded Leaky-ReLU slope (factor alpha * m)."""

    alpha: float
    m0: int
    n: int
    p: int
    q_min: int
    q_max: int


@dataclass(frozen=True)
class RequantParams:
    m: float
    m0: int
    n: int
    p_u: int
    q_min: int
    q_max: int
    bit_width: int
    out_scale: float
    out_zero_point: int = 0
    neg_branch: Optional[NegativeBranch] = None

    def to_dict(self) -> dict:
        payload = {
            "m": self.m, "m0": self.m0, "n": self.n, "p_u": self.p_u,
            "q_min": self.q_min, "q_max": self.q_max, "bit_width": self.bit_width,
            "out_scale": self.out_scale, "out_zero_point": self.out_zero_point,
            "neg_branch": None,
        }
        if self.neg_branch is not None:
            nb = self.neg_branch
            payload["neg_branch"] = {
                "alpha": nb.alpha, "m0": nb.m0, "n": nb.n, "p": nb.p,
                "q_min": nb.q_min, "q_max": nb.q_max,
            }
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "RequantParams":
        neg = payload.get("neg_branch")
        return cls(
            m=float(payload["m"]), m0=int(payload["m0"]), n=int(payload["n"]),
            p_u=int(payload["p_u"]), q_min=int(payload["q_min"]), q_max=int(payload["q_max"]),
            bit_width=int(payload["bit_width"]), out_scale=float(payload["out_scale"]),
            out_zero_point=int(payload["out_zero_point"]),
            neg_branch=NegativeBranch(**neg) if neg else None,
        )


def _round_fraction(value: Fraction) -> int:
    """Round-half-away on an exact rational."""
    magnitude = abs(value)
    whole = magnitude.numerator // magnitude.denominator
    if magnitude - whole >= Fraction(1, 2):
        whole += 1
    return whole if value >= 0 else -whole


def _clip_bounds(m: Fraction, bit_width: int) -> Tuple[int, int]:
    lo, hi = int_range(bit_width)
    q_max = math.floor(Fraction(hi) / m)
    q_min = math.ceil(Fraction(lo) / m)
    # tiny factors: bounds beyond int32 mean m0 == 0, the layer emits its zero point
    return max(q_min, INT32_MIN), min(q_max, INT32_MAX)


def derive_requant(
    s_w: float,
    s_v: float,
    s_next: float,
    z_next: int = 0,
    bit_width: int = 8,
    leaky_slope: Optional[float] = None,
) -> RequantParams:
    """
    Derive the dyadic requantization constants of one output channel.

    Args:
        s_w: Weight step of the channel
        s_v: Input activation step
        s_next: Output activation step
        z_next: Output zero point (signed storage)
        bit_width: Output bit width, 8 or 16
        leaky_slope: Negative slope alpha when a Leaky ReLU is folded in

    Returns:
        RequantParams
    """
    if bit_width not in (8, 16):
        raise InvalidArgumentError(f"requantization targets 8 or 16 bits, got {bit_width}")
    for name, value in (("s_w", s_w), ("s_v", s_v), ("s_next", s_next)):
        if not value > 0 or not math.isfinite(value):
            raise InvalidScaleError(f"{name} must be positive and finite, got {value}")

    m = float(np.float32(s_w * s_v / s_next))
    return derive_from_factor(m, z_next, bit_width, s_next, leaky_slope)


def derive_from_factor(
    m: float,
    z_next: int = 0,
    bit_width: int = 8,
    out_scale: float = 1.0,
    leaky_slope: Optional[float] = None,
) -> RequantParams:
    """Same derivation starting from the requantization factor m itself."""
    if not m > 0 or not math.isfinite(m):
        raise InvalidScaleError(f"requantization factor must be positive, got {m}")
    if m >= (1 << (bit_width - 1)):
        raise DegenerateRequantError(f"factor {m} cannot carry information at {bit_width} bits")

    n = 32 - bit_width
    exact_m = Fraction(m)
    m0 = math.floor(exact_m * (1 << n))
    q_min, q_max = _clip_bounds(exact_m, bit_width)
    if q_max < q_min:
        raise DegenerateRequantError(f"empty clip range [{q_min}, {q_max}] for factor {m}")
    p_u = _round_fraction(Fraction(int(z_next)) / exact_m)

    neg_branch = None
    if leaky_slope is not None:
        if not leaky_slope > 0:
            raise InvalidArgumentError(f"leaky slope must be positive, got {leaky_slope}")
        exact_neg = Fraction(leaky_slope) * exact_m
        neg_min, neg_max = _clip_bounds(exact_neg, bit_width)
        neg_branch = NegativeBranch(
            alpha=float(leaky_slope),
            m0=math.floor(exact_neg * (1 << n)),
            n=n,
            p=_round_fraction(Fraction(int(z_next)) / exact_neg),
            q_min=neg_min,
            q_max=neg_max,
        )

    return RequantParams(
        m=m, m0=m0, n=n, p_u=p_u, q_min=q_min, q_max=q_max, bit_width=bit_width,
        out_scale=float(out_scale), out_zero_point=int(z_next), neg_branch=neg_branch,
    )


def rid(x, n) -> np.ndarray:
    """
    Integer division by 2^n, rounding to nearest with ties away from zero.

    (|x| + 2^(n-1)) >> n with the sign restored afterwards.
    """
    x = np.asarray(x, dtype=np.int64)
    n = np.asarray(n, dtype=np.int64)
    half = np.left_shift(np.int64(1), n - 1)
    return np.sign(x) * np.right_shift(np.abs(x) + half, n)


def _scale_branch(acc, p, q_min, q_max, m0, n, bit_width):
    lo, hi = int_range(bit_width)
    clipped = np.clip(acc + p, q_min, q_max)
    return np.clip(rid(m0 * clipped, n), lo, hi)


def _output(values, params: RequantParams) -> QuantizedTensor:
    return QuantizedTensor(
        data=values,
        bit_width=params.bit_width,
        scale=params.out_scale,
        zero_point=params.out_zero_point,
        symmetric=params.out_zero_point == 0,
    )


def requantize(acc, params: RequantParams) -> QuantizedTensor:
    """Map a 32-bit accumulation to B-bit integers with the positive branch only."""
    acc = np.asarray(acc, dtype=np.int64)
    values = _scale_branch(acc, params.p_u, params.q_min, params.q_max,
                           params.m0, params.n, params.bit_width)
    return _output(values, params)


def requantize_leaky(acc, params: RequantParams) -> QuantizedTensor:
    """
    Requantization with a folded Leaky ReLU.

    The branch is picked from the sign of the raw accumulation, before any
    zero point is added; acc == 0 takes the positive branch.
    """
    if params.neg_branch is None:
        raise ContractViolationError("requantize_leaky needs params with a negative branch")
    acc = np.asarray(acc, dtype=np.int64)
    nb = params.neg_branch
    positive = _scale_branch(acc, params.p_u, params.q_min, params.q_max,
                             params.m0, params.n, params.bit_width)
    negative = _scale_branch(acc, nb.p, nb.q_min, nb.q_max, nb.m0, nb.n, params.bit_width)
    return _output(np.where(acc >= 0, positive, negative), params)


def requantize_channels(acc, params: Sequence[RequantParams], leaky: bool = False) -> np.ndarray:
    """
    Per-output-channel requantization along axis 0 of acc.

    Per-channel weight steps make m differ by channel, so each channel
    carries its own RequantParams; all of them share B and n.
    """
    acc = np.asarray(acc, dtype=np.int64)
    if acc.shape[0] != len(params):
        raise ContractViolationError(f"{len(params)} requant params for {acc.shape[0]} channels")
    shape = (-1,) + (1,) * (acc.ndim - 1)

    def column(values):
        return np.asarray(values, dtype=np.int64).reshape(shape)

    bit_width = params[0].bit_width
    positive = _scale_branch(
        acc, column([p.p_u for p in params]), column([p.q_min for p in params]),
        column([p.q_max for p in params]), column([p.m0 for p in params]),
        column([p.n for p in params]), bit_width)
    if not leaky:
        return positive
    if any(p.neg_branch is None for p in params):
        raise ContractViolationError("leaky requantization needs a negative branch on every channel")
    negative = _scale_branch(
        acc, column([p.neg_branch.p for p in params]), column([p.neg_branch.q_min for p in params]),
        column([p.neg_branch.q_max for p in params]), column([p.neg_branch.m0 for p in params]),
        column([p.neg_branch.n for p in params]), bit_width)
    return np.where(acc >= 0, positive, negative)


def check_overflow(params: RequantParams) -> bool:
    """True when m0 * q stays inside int32 over the whole clip range (both branches)."""
    branches = [(params.m0, params.q_min, params.q_max)]
    if params.neg_branch is not None:
        nb = params.neg_branch
        branches.append((nb.m0, nb.q_min, nb.q_max))
    for m0, q_min, q_max in branches:
        for q in (q_min, q_max):
            if not INT32_MIN <= m0 * q <= INT32_MAX:
                return False
    return True
