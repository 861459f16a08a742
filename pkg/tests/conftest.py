import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ripscov.covariance import AdmissibleSequence, required_moment_keys
from ripscov.moments import MomentTable


@pytest.fixture(scope="session")
def example_sequence():
    """The worked 3-functional configuration: d=3, k=(1,2,3), all powers 1."""
    return AdmissibleSequence(((1, 1.0), (2, 1.0), (3, 1.0)), 3)


@pytest.fixture(scope="session")
def example_table(example_sequence):
    table = MomentTable(3)
    table.ensure(required_moment_keys(example_sequence), 8192, seed=20240815)
    return table


@pytest.fixture(scope="session")
def pair_sequence_2d():
    """Equal-k pair used by the sparse-regime residual law: d=2, (1,0) and (1,1)."""
    return AdmissibleSequence(((1, 0.0), (1, 1.0)), 2)


@pytest.fixture(scope="session")
def pair_table_2d(pair_sequence_2d):
    table = MomentTable(2)
    table.ensure(required_moment_keys(pair_sequence_2d), 8192, seed=7)
    return table


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
