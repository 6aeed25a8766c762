import numpy as np
import pytest

from damdnet.morphable import generate_synthetic_model


@pytest.fixture(scope="session")
def face_model():
    return generate_synthetic_model(seed=7, n_vertices=240)


@pytest.fixture(scope="session")
def small_face_model():
    return generate_synthetic_model(seed=3, n_vertices=80)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
