import numpy as np
import pytest

from orthohuman.geometry import OrthographicCamera, PerspectiveCamera
from orthohuman.primitives import make_box, make_capsule, make_plane, make_uv_sphere


@pytest.fixture
def ortho_cam_small():
    return OrthographicCamera(resolution=(128, 64), frame=(1.0, 0.5))


@pytest.fixture
def ortho_cam_medium():
    return OrthographicCamera(resolution=(256, 128), frame=(1.0, 0.5))


@pytest.fixture
def persp_cam_small():
    return PerspectiveCamera(resolution=(128, 64))


@pytest.fixture
def unit_cube():
    # 0.4 m cube centered at the origin, well inside the default frame.
    return make_box(size=(0.4, 0.4, 0.4))


@pytest.fixture
def sphere():
    return make_uv_sphere(radius=0.2, rings=32, segments=64)


@pytest.fixture
def capsule():
    return make_capsule(radius=0.18, half_height=0.25)


@pytest.fixture
def front_plane():
    return make_plane(width=0.4, height=0.4, z=-0.2, normal_sign=-1)
