"""Shared fixtures for the itoint test suite."""

import sys
from pathlib import Path

import pytest

# Add the repository root to the path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from itoint.rng import PurposeTag, derive_seed
from itoint.wiener import PathEnsemble, TimeGrid, sample_path


@pytest.fixture
def master_seed():
    return 20240601


@pytest.fixture
def dyadic_path(master_seed):
    """One path on the level-6 grid over [0, 1]."""
    return sample_path(TimeGrid.dyadic(6), derive_seed(master_seed, 0, PurposeTag.PATH_INCREMENTS))


@pytest.fixture
def small_ensemble(master_seed):
    """400 paths sampled on level 2 and refined to level 8."""
    base = PathEnsemble(master_seed, TimeGrid.dyadic(2), 400)
    return base.refined(TimeGrid.dyadic(8))
