from pathlib import Path

import numpy as np
import pytest

from subspace_sparsifier.testkit import graph_sha, load_fixtures

FIXTURE_FILE = Path(__file__).parent / "fixtures" / "derived_values.txt"


@pytest.fixture(scope="session")
def frozen():
    """Lookup ``frozen(G, quantity)`` into the pinned oracle values."""
    table = load_fixtures(FIXTURE_FILE)
    assert table, "run tests/freeze_fixtures.py to create the fixture file"

    def get(G, quantity):
        return table[(graph_sha(G), quantity)]

    get.table = table
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
