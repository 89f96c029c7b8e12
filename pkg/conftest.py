import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.core.phantom import generate_slice, generate_volume
from src.models import AccuracyPolicy, ModelCoefficients, Scenario, ScenarioKind


@pytest.fixture
def policy():
    return AccuracyPolicy()


@pytest.fixture
def coefficients():
    """Well-formed model: rising inflection at 5 px, falling at 25 px, plateau 13.785 px"""
    return ModelCoefficients(f0=-50.0, a=300.0, b=2.0, c=10.0, d=2.0, e=50.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20230516)


@pytest.fixture
def norm_scenario():
    return Scenario(kind=ScenarioKind.NORM, lumen_diameter_mm=20.0, noise_sigma=10.0, seed=11,
                    dims=(48, 48))


@pytest.fixture
def clean_scenario(norm_scenario):
    return norm_scenario.with_changes(noise_sigma=0.0)


@pytest.fixture
def noisy_slice(norm_scenario):
    return generate_slice(norm_scenario)


@pytest.fixture
def clean_slice(clean_scenario):
    return generate_slice(clean_scenario)


@pytest.fixture
def phantom_volume(norm_scenario):
    """(volume, mask, truths) with three slices"""
    return generate_volume(norm_scenario, 3)
