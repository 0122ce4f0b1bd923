import numpy as np
import pytest

from artiplane.core import default_intrinsics
from artiplane.synth.dataset import build_ground_truth
from artiplane.synth.generator import SceneSpec


@pytest.fixture(scope="session")
def K256():
    return default_intrinsics(256)


@pytest.fixture(scope="session")
def K160():
    return default_intrinsics(160)


@pytest.fixture(scope="session")
def door_scene(K160):
    """Tall single-door cabinet with two shelves, rendered at 160^2."""
    spec = SceneSpec("storage", 1, (1.2, 2.0, 0.9), 0.03, 2, seed=21,
                     part_kinds=("door",))
    return build_ground_truth(spec, n_views=3, K=K160)


@pytest.fixture(scope="session")
def mixed_scene(K160):
    """Three-part cabinet: door, lid and drawer rows."""
    spec = SceneSpec("storage", 3, (1.4, 1.8, 1.0), 0.03, 1, seed=33,
                     part_kinds=("door", "lid", "drawer"))
    return build_ground_truth(spec, n_views=3, K=K160)


def assert_rotation(R, tol=1e-9):
    assert np.max(np.abs(R @ R.T - np.eye(3))) < tol
    assert abs(np.linalg.det(R) - 1.0) < tol
