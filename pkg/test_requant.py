"""
Tests for dyadic requantization and the folded Leaky ReLU.
"""

import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent))

import numpy as np
import pytest

from src.errors import ContractViolationError, DegenerateRequantError, InvalidScaleError
from src.quant.requant import (
    INT32_MAX,
    INT32_MIN,
    RequantParams,
    check_overflow,
    derive_from_factor,
    derive_requant,
    requantize,
    requantize_channels,
    requantize_leaky,
    rid,
)


def test_derive_half_factor():
    p = derive_from_factor(0.5, bit_width=8)
    assert (p.n, p.m0, p.q_max, p.q_min) == (24, 8388608, 254, -256)


def test_derive_unit_factor():
    p = derive_from_factor(1.0, bit_width=8)
    assert (p.m0, p.q_max, p.q_min) == (1 << 24, 127, -128)


def test_derive_pre_scaling_zero_point():
    assert derive_from_factor(0.5, z_next=10, bit_width=8).p_u == 20


def test_derive_from_scales():
    p = derive_requant(0.5, 0.25, 0.125, bit_width=8)
    assert p.m == 1.0
    assert p.out_scale == 0.125


def test_derive_sixteen_bit_shift():
    assert derive_from_factor(0.01, bit_width=16).n == 16


def test_derive_rejects_bad_scales():
    with pytest.raises(InvalidScaleError):
        derive_requant(0.0, 1.0, 1.0)
    with pytest.raises(InvalidScaleError):
        derive_from_factor(-1.0)
    with pytest.raises(DegenerateRequantError):
        derive_from_factor(200.0, bit_width=8)


def test_tiny_factor_clamps_bounds_to_int32():
    p = derive_from_factor(1e-9, bit_width=8)
    assert p.m0 == 0
    assert (p.q_min, p.q_max) == (INT32_MIN, INT32_MAX)
    assert requantize(np.array([123456]), p).data.tolist() == [0]


def test_rid_rounds_half_away():
    assert rid(np.array([3, 5, -3, -5, 4]), 1).tolist() == [2, 3, -2, -3, 2]


# requantize

def test_requantize_known_values():
    p = derive_from_factor(0.5, bit_width=8)
    assert requantize(np.array([100]), p).data.tolist() == [50]
    assert requantize(np.array([0]), p).data.tolist() == [0]
    assert requantize(np.array([10 ** 6]), p).data.tolist() == [127]


def test_requantize_is_monotone():
    p = derive_from_factor(0.3719, z_next=-17, bit_width=8)
    acc = np.arange(-2000, 2000)
    out = requantize(acc, p).data
    assert np.all(np.diff(out) >= 0)


def test_requantize_carries_output_quantizer():
    p = derive_from_factor(0.5, z_next=3, bit_width=8, out_scale=0.1)
    out = requantize(np.array([0]), p)
    assert out.zero_point == 3 and out.scale == 0.1 and not out.symmetric


# Leaky ReLU

def test_leaky_known_values():
    p = derive_from_factor(0.5, bit_width=8, leaky_slope=0.25)
    assert p.neg_branch.m0 == 2097152
    assert requantize_leaky(np.array([-64]), p).data.tolist() == [-8]
    assert requantize_leaky(np.array([64]), p).data.tolist() == [32]
    assert requantize_leaky(np.array([0]), p).data.tolist() == [0]


def test_leaky_needs_negative_branch():
    with pytest.raises(ContractViolationError):
        requantize_leaky(np.array([1]), derive_from_factor(0.5))


def test_leaky_branch_depends_only_on_sign():
    acc = np.array([-300, -1, 0, 1, 300])
    for m in (0.01, 0.2, 0.9):
        p = derive_from_factor(m, z_next=5, bit_width=8, leaky_slope=0.1)
        out = requantize_leaky(acc, p).data
        pos = requantize(acc, p).data
        # non-negative accumulations always follow the positive branch
        assert out[2:].tolist() == pos[2:].tolist()


def test_leaky_asymmetric_output_matches_float():
    m, alpha, z = 0.05, 0.2, -40
    p = derive_from_factor(m, z_next=z, bit_width=8, leaky_slope=alpha)
    acc = np.arange(-1000, 1000, 7)
    expected = np.where(acc >= 0, acc * m, acc * alpha * m) + z
    out = requantize_leaky(acc, p).data
    assert np.max(np.abs(out - np.clip(expected, -128, 127))) <= 1


# Per-channel

def test_channels_match_per_channel_calls():
    rng = np.random.default_rng(1)
    params = [derive_from_factor(m, z_next=-5, bit_width=8, leaky_slope=0.2)
              for m in (0.02, 0.5, 1.3)]
    acc = rng.integers(-5000, 5000, size=(3, 4, 4))
    out = requantize_channels(acc, params, leaky=True)
    for c, p in enumerate(params):
        assert np.array_equal(out[c], requantize_leaky(acc[c], p).data)


def test_channels_count_mismatch():
    with pytest.raises(ContractViolationError):
        requantize_channels(np.zeros((2, 3)), [derive_from_factor(0.5)])


# Overflow freedom and fidelity

def test_overflow_free_for_random_params():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        bits = int(rng.choice([8, 16]))
        m = float(np.float32(10 ** rng.uniform(-6, np.log10((1 << (bits - 1)) - 1))))
        p = derive_from_factor(m, bit_width=bits, leaky_slope=0.1)
        assert check_overflow(p)
        for q in (p.q_min, p.q_max, 0, 1, -1):
            wide = p.m0 * q
            assert INT32_MIN <= wide <= INT32_MAX
            assert int(np.int64(p.m0) * np.int64(q)) == int(np.int32(wide))


def test_dyadic_fidelity_at_24_bit_shift():
    rng = np.random.default_rng(11)
    exact = 0
    total = 0
    for m in rng.uniform(0.001, 1.0, size=200):
        p = derive_from_factor(float(m), bit_width=8)
        q = rng.integers(p.q_min, p.q_max + 1, size=50)
        approx = rid(p.m0 * q, p.n)
        reference = np.sign(q) * np.floor(np.abs(q) * p.m + 0.5)
        diff = np.abs(approx - reference)
        assert diff.max() <= 1
        exact += int(np.sum(diff == 0))
        total += q.size
    assert exact / total >= 0.99


def test_round_trip_through_dict():
    p = derive_from_factor(0.3, z_next=4, bit_width=8, out_scale=0.02, leaky_slope=0.1)
    assert RequantParams.from_dict(p.to_dict()) == p


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
