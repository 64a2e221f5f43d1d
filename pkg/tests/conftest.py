import hypothesis
import numpy as np
import pytest

from cislunar_ssa import dynamics as dyn

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def catalog():
    return dyn.build_catalog(12.0)


@pytest.fixture(scope="session")
def corrected_states(catalog):
    """Differential-corrected initial states, keyed by (family, resonance)."""
    out = {}
    for rec in catalog[:30]:
        out[(rec.family, rec.resonance)] = dyn.correct_initial_state(rec)
    return out


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240917)
