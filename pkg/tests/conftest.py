import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile(
    "mixsense",
    derandomize=True,
    max_examples=60,
    deadline=None,
)
hypothesis.settings.load_profile("mixsense")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
