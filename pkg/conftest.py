"""
Shared fixtures: a quantized toy model, its latent source and the CDF tables.
Built once per session; every fixture is read-only.
"""

import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent))

import pytest

from src.coding.cdf_tables import build_all_luts
from src.data.sources import SampleLatentSource
from src.engine.pipeline import collect_activation_ranges, quantize_graph
from src.engine.toy import random_float_model


@pytest.fixture(scope="session")
def toy_model():
    return random_float_model(seed=0, height=6, width=6)


@pytest.fixture(scope="session")
def toy_source(toy_model):
    return SampleLatentSource(toy_model.hyper_shape, toy_model.latent_shape, seed=0,
                              hyper_sigma_indices=toy_model.hyper_sigma_indices)


@pytest.fixture(scope="session")
def calibration_report(toy_model, toy_source):
    return collect_activation_ranges(toy_model, toy_source.fetch_calibration(6))


@pytest.fixture(scope="session")
def toy_graph(toy_model, calibration_report):
    return quantize_graph(toy_model, calibration_report)


@pytest.fixture(scope="session")
def luts():
    return build_all_luts(64, 4096)


@pytest.fixture(scope="session")
def small_luts():
    return build_all_luts(8, 4096)
