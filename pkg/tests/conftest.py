import numpy as np
import pytest

from depthdistill.core.camera import CameraIntrinsics
from depthdistill.synthscene import Plane, SceneSpec, Texture, preset, render


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def K():
    return CameraIntrinsics(500.0, 500.0, 128.0, 128.0)


@pytest.fixture(scope="session")
def boxes_sample():
    return render(preset("default-boxes", resolution=96), 0)


@pytest.fixture(scope="session")
def wall_spec():
    """Fronto-parallel checker wall at 2 m."""
    return SceneSpec(
        name="wall-2m",
        primitives=(Plane((0.0, 0.0, 2.0), (0.0, 0.0, -1.0), Texture("checker", period=0.3)),),
        width=64,
        height=64,
    )


@pytest.fixture(scope="session")
def wall_sample(wall_spec):
    return render(wall_spec, 0)
