import numpy as np
import pytest
from hypothesis import strategies as st

from openbia.equations import builtin_registry
from openbia.estimator import ImpedanceReading, SubjectProfile

# Adult physiological ranges used for randomized checks.
HEIGHT = (140.0, 210.0)
WEIGHT = (40.0, 150.0)
RESISTANCE = (300.0, 900.0)
REACTANCE = (30.0, 90.0)
AGE = (18.0, 90.0)


@pytest.fixture(scope="session")
def registry():
    return builtin_registry()


@pytest.fixture(scope="session")
def kyle(registry):
    return registry["kyle2001"]


@pytest.fixture
def worked_profile():
    return SubjectProfile(height=170, weight=70, gender_entry="male")


@pytest.fixture
def worked_reading():
    return ImpedanceReading(resistance=500, reactance=50)


def random_subjects(seed, n, gender_entry="male"):
    """``n`` (profile, reading) pairs drawn uniformly from the adult ranges."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        profile = SubjectProfile(
            height=rng.uniform(*HEIGHT),
            weight=rng.uniform(*WEIGHT),
            age=rng.uniform(*AGE),
            athlete=bool(rng.integers(2)),
            gender_entry=gender_entry,
        )
        reading = ImpedanceReading(rng.uniform(*RESISTANCE), rng.uniform(*REACTANCE))
        out.append((profile, reading))
    return out


profiles = st.builds(
    SubjectProfile,
    height=st.floats(*HEIGHT),
    weight=st.floats(*WEIGHT),
    age=st.none() | st.floats(*AGE),
    athlete=st.booleans(),
    gender_entry=st.sampled_from(["male", "female", "nonbinary_or_unspecified"]),
)
readings = st.builds(
    ImpedanceReading,
    resistance=st.floats(*RESISTANCE),
    reactance=st.floats(*REACTANCE),
)
