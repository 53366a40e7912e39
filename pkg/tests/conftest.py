import os
import sys

import numpy as np
import pytest
from hypothesis import settings, strategies as st

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

# Randomized filler checks run 1000 cases per filler under the acceptance profile.
settings.register_profile("dev", max_examples=40, deadline=None)
settings.register_profile("acceptance", max_examples=1000, deadline=None)
settings.load_profile(os.environ.get("CECHKIT_HYPOTHESIS_PROFILE", "dev"))

from cechkit.chain_core import Chain, PointSet  # noqa: E402
from cechkit.sphere_geometry import sample_net  # noqa: E402


def chains(dim, vertices=6, max_terms=6):
    """Random integer chains of one dimension over vertices 0..vertices-1."""
    simplices = st.tuples(*[st.integers(0, vertices - 1)] * (dim + 1))
    terms = st.dictionaries(simplices, st.integers(-3, 3).filter(bool), max_size=max_terms)
    return terms.map(lambda t: Chain(t, dim=dim))


def unit(*xs):
    v = np.asarray(xs, dtype=float)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def s2_net():
    return sample_net(0.15, 3, seed=0).points


@pytest.fixture(scope="session")
def s1_net():
    return sample_net(0.1, 2, seed=0).points


@pytest.fixture
def s2_points():
    return PointSet(3)
