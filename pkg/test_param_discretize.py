"""
Tests for the integer (mu, sigma) discretization.
"""

import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent))

import numpy as np
import pytest

from src.errors import DomainError, IndexOutOfRangeError
from src.coding.discretize import (
    NUM_SIGMA_LEVELS,
    SIGMA_Q_MAX,
    SIGMA_Q_MIN,
    SigmaIndex,
    int_log2,
    int_log2_array,
    level_table,
    mu_index,
    mu_index_array,
    natural_log_sigma_index,
    natural_log_table,
    plot_levels,
    sigma_index,
    sigma_index_array,
    sigma_index_compare_vectorized,
    sigma_index_loop_oracle,
    sigma_index_oracle,
    sigma_levels,
    sigma_reconstruct,
)


# int_log2

@pytest.mark.parametrize("q, expected", [(1, 0), (2, 1), (8, 3), (9, 3), (15, 3), (16, 4), (2048, 11),
                                         ((1 << 32) - 1, 31)])
def test_int_log2(q, expected):
    assert int_log2(q) == expected


def test_int_log2_rejects_non_positive():
    for bad in (0, -5, 1 << 32):
        with pytest.raises(DomainError):
            int_log2(bad)


def test_int_log2_array_matches_scalar():
    q = np.arange(1, 5000)
    assert int_log2_array(q).tolist() == [int_log2(v) for v in q.tolist()]


# sigma_index

@pytest.mark.parametrize("q_sigma, expected", [(8, 0), (12, 4), (16, 8), (17, 9), (96, 28), (2048, 64)])
def test_sigma_index_known_values(q_sigma, expected):
    assert sigma_index(q_sigma).index == expected


def test_sigma_index_clips_out_of_range():
    assert sigma_index(0).index == 0
    assert sigma_index(-300).index == 0
    assert sigma_index(30000).index == 64


def test_sigma_index_is_major_minor():
    idx = sigma_index(96)
    assert (idx.major, idx.minor) == (3, 4)
    assert SigmaIndex.from_index(28) == idx


def test_sigma_index_from_index_bounds():
    with pytest.raises(IndexOutOfRangeError):
        SigmaIndex.from_index(NUM_SIGMA_LEVELS)


def test_reconstruction_known_values():
    assert sigma_reconstruct(0) == 0.125
    assert sigma_reconstruct(4) == 0.1875
    assert sigma_reconstruct(64) == 32.0
    assert sigma_reconstruct(SigmaIndex(8, 0)) == 32.0


def test_levels_are_strictly_increasing():
    levels = sigma_levels()
    assert levels.size == NUM_SIGMA_LEVELS
    assert np.all(np.diff(levels) > 0)


def test_calculation_matches_comparison_exhaustively():
    q = np.arange(SIGMA_Q_MIN, SIGMA_Q_MAX + 1)
    calc = sigma_index_array(q)
    assert calc.tolist() == [sigma_index_oracle(v) for v in q.tolist()]
    assert np.array_equal(calc, sigma_index_compare_vectorized(q))
    assert np.array_equal(calc, sigma_index_loop_oracle(q))


def test_scalar_and_vector_agree():
    q = np.random.default_rng(0).integers(-100, 4000, size=500)
    assert sigma_index_array(q).tolist() == [sigma_index(v).index for v in q.tolist()]


def test_sigma_index_monotone_and_idempotent():
    q = np.arange(SIGMA_Q_MIN, SIGMA_Q_MAX + 1)
    index = sigma_index_array(q)
    assert np.all(np.diff(index) >= 0)
    assert index.min() == 0 and index.max() == NUM_SIGMA_LEVELS - 1
    # a reconstructed level sits in its own cell
    for i in range(NUM_SIGMA_LEVELS):
        q_level = int(sigma_reconstruct(i) * 64)
        assert sigma_index(q_level).index == i


def test_level_rounds_up():
    # sigma between two levels maps to the upper one
    q = int(sigma_reconstruct(20) * 64) + 1
    assert sigma_reconstruct(sigma_index(q)) >= q / 64


# mu_index

@pytest.mark.parametrize("q_mu, expected", [(70, (1, 6)), (-1, (-1, 63)), (0, (0, 0)), (64, (1, 0)),
                                            (-64, (-1, 0)), (-65, (-2, 63))])
def test_mu_index_known_values(q_mu, expected):
    idx = mu_index(q_mu)
    assert (idx.floor_mu, idx.index) == expected


def test_mu_index_reconstructs():
    q = np.arange(-5000, 5000, 7)
    floor_mu, index = mu_index_array(q)
    assert np.array_equal(64 * floor_mu + index, q)
    assert index.min() >= 0 and index.max() <= 63


# Natural-log baseline

def test_natural_log_baseline():
    table = natural_log_table()
    assert table.size == 64
    assert table[0] == pytest.approx(0.11)
    assert table[-1] == pytest.approx(256.0)
    assert natural_log_sigma_index([0.01, 0.5, 1000.0]).tolist()[0] == 0
    assert natural_log_sigma_index([1000.0]).tolist() == [63]


# Level inspection

def test_level_table():
    table = level_table()
    assert len(table) == NUM_SIGMA_LEVELS
    assert table["is_major"].sum() == 9
    assert table.loc[table["index"] == 64, "q_sigma"].item() == 2048
    assert table.loc[table["index"] == 0, "q_sigma"].item() == 8


def test_plot_levels_writes_png(tmp_path):
    out = plot_levels(tmp_path / "levels.png")
    assert out.exists() and out.stat().st_size > 0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
