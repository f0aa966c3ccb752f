import math

import numpy as np
import pytest

from depthdistill.core.camera import CameraIntrinsics, RigidTransform, stereo_transform
from depthdistill.core.errors import BehindCameraError, DomainError
from depthdistill.core.grids import DepthMap, Image
from depthdistill.core.utils import central_difference
from depthdistill.geometry import (
    apply_transform,
    backproject,
    bilinear_sample,
    pose_param_to_transform,
    project,
    warp,
)
from depthdistill.synthscene import preset, render, visibility_mask


def test_backproject_principal_point(K):
    assert np.allclose(backproject((K.cx, K.cy), 2.0, K), [0.0, 0.0, 2.0])


def test_backproject_unit_focal():
    K = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    assert np.allclose(backproject((3, 4), 2.0, K), [6.0, 8.0, 2.0])


def test_backproject_hand_evaluated(K):
    assert np.allclose(backproject((228, 128), 5.0, K), [1.0, 0.0, 5.0])


def test_backproject_rejects_non_positive_depth(K):
    with pytest.raises(DomainError):
        backproject((1, 1), 0.0, K)


def test_project_optical_axis():
    K = CameraIntrinsics(100.0, 100.0, 64.0, 64.0)
    (u, v), z = project((0.0, 0.0, 2.0), K)
    assert (u, v, z) == (64.0, 64.0, 2.0)


def test_project_hand_evaluated(K):
    (u, _), _ = project((1.0, 0.0, 5.0), K)
    assert u == pytest.approx(228.0)


def test_project_behind_camera(K):
    with pytest.raises(BehindCameraError):
        project((0.0, 0.0, -1.0), K)


def test_project_backproject_round_trip(K, rng):
    for _ in range(50):
        pixel = rng.uniform(0, 256, 2)
        depth = rng.uniform(0.1, 20.0)
        (u, v), z = project(backproject(pixel, depth, K), K)
        assert np.allclose((u, v), pixel, atol=1e-9)
        assert z == pytest.approx(depth, abs=1e-12)


def test_apply_transform_examples():
    p = np.array([0.3, -0.2, 1.7])
    assert np.allclose(apply_transform(RigidTransform.identity(), p), p)
    assert np.allclose(apply_transform(stereo_transform(0.13), (0, 0, 1)), (-0.13, 0.0, 1.0))
    assert np.allclose(apply_transform(RigidTransform.from_yaw(90.0), (1, 0, 0)), (0, 0, -1), atol=1e-12)


def test_inverse_and_compose():
    T = RigidTransform.from_yaw(17.0, (0.1, -0.4, 2.0))
    both = T.inverse() @ T
    assert np.allclose(both.rotation, np.eye(3))
    assert np.allclose(both.translation, 0.0, atol=1e-12)


def test_bilinear_constant_and_integer():
    image = np.full((5, 6), 0.25)
    assert np.allclose(bilinear_sample(image, (2.3, 1.7)).values, 0.25)
    ramp = np.arange(30, dtype=float).reshape(5, 6)
    assert bilinear_sample(ramp, (4, 3)).values[0] == ramp[3, 4]


def test_bilinear_patch_center():
    sample = bilinear_sample(np.array([[0.0, 1.0], [2.0, 3.0]]), (0.5, 0.5))
    assert sample.values[0] == 1.5
    assert sample.du[0] == 1.0
    assert sample.dv[0] == 2.0


def test_bilinear_out_of_frame_is_invalid():
    sample = bilinear_sample(np.ones((4, 4)), (np.array([-0.1, 3.0, np.nan]), np.array([1.0, 3.01, 1.0])))
    assert sample.valid.tolist() == [False, False, False]
    assert np.all(sample.values == 0.0)


def test_identity_warp_reproduces_source(rng):
    K = CameraIntrinsics(20.0, 20.0, 7.5, 7.5)
    source = Image(rng.random((16, 16, 3)))
    result = warp(source, DepthMap(rng.uniform(1.0, 3.0, (16, 16))), RigidTransform.identity(), K)
    assert result.valid[1:-1, 1:-1].all()
    keep = result.valid
    assert np.allclose(result.image.data[keep], source.data[keep], atol=1e-9)


def test_warp_shape_mismatch():
    K = CameraIntrinsics(10.0, 10.0, 2.0, 2.0)
    with pytest.raises(DomainError):
        warp(Image(np.zeros((4, 4))), DepthMap(np.ones((5, 4))), RigidTransform.identity(), K)


def test_warp_jacobian_matches_finite_differences(rng):
    h, w = 12, 14
    K = CameraIntrinsics(15.0, 15.0, 6.5, 5.5)
    # smooth source so the bilinear kinks stay away from the sample points
    v, u = np.mgrid[0:h, 0:w]
    source = Image(0.5 + 0.4 * np.sin(0.3 * u + 0.2 * v))
    depth = rng.uniform(1.5, 2.5, (h, w))
    T = stereo_transform(0.1)
    result = warp(source, depth, T, K)

    for flat in rng.choice(h * w, size=20, replace=False):
        r, c = divmod(int(flat), w)
        if not result.valid[r, c]:
            continue

        def value(d, r=r, c=c):
            return float(warp(source, d, T, K).image.data[r, c, 0])

        numeric = central_difference(value, depth, eps=1e-6, indices=[flat])[0]
        assert result.jacobian[r, c, 0] == pytest.approx(numeric, rel=1e-3, abs=1e-6)


def test_pose_params_zero_and_translation():
    T, _ = pose_param_to_transform(np.zeros(6))
    assert np.allclose(T.rotation, np.eye(3))
    T, _ = pose_param_to_transform([0, 0, 0, 1, 2, 3])
    assert np.allclose(T.rotation, np.eye(3))
    assert np.allclose(T.translation, [1, 2, 3])


def test_pose_params_rodrigues():
    T, _ = pose_param_to_transform([math.pi / 2, 0, 0, 0, 0, 0])
    expected = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    assert np.allclose(T.rotation, expected, atol=1e-12)


@pytest.mark.parametrize("params", [np.zeros(6), np.array([0.1, -0.2, 0.3, 0.01, 0.02, -0.03])])
def test_pose_jacobian_matches_finite_differences(params):
    point = np.array([0.4, -0.7, 2.5])
    _, jac = pose_param_to_transform(params)
    analytic = jac.action(point)
    for i in range(3):

        def coord(p, i=i):
            return float(pose_param_to_transform(p)[0].apply(point)[i])

        numeric = central_difference(coord, params, eps=1e-6)
        assert np.allclose(analytic[i], numeric, atol=1e-7)


def test_stereo_reprojection_consistency():
    """Warping the right render onto the left view with GT depth reproduces
    the left render on interior pixels that both cameras see.
    """
    s = render(preset("default-boxes", resolution=192), 0)
    result = warp(s.right, s.gt_depth, stereo_transform(s.baseline), s.intrinsics)
    mask = result.valid & visibility_mask(s)
    mask[:2, :] = mask[-2:, :] = False
    mask[:, :2] = mask[:, -2:] = False
    assert mask.sum() > 0.5 * mask.size
    mae = np.abs(result.image.data - s.left.data).mean(axis=2)[mask].mean()
    assert mae < 2e-2
