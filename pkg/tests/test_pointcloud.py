import numpy as np
import pytest

from depthdistill.core.camera import CameraIntrinsics, RigidTransform
from depthdistill.core.errors import DomainError, FormatError
from depthdistill.core.grids import DepthMap, Image
from depthdistill.geometry import project
from depthdistill.pointcloud import depth_to_cloud, read_ply, write_ply


def test_single_pixel_at_principal_point():
    K = CameraIntrinsics(10.0, 10.0, 0.0, 0.0)
    cloud = depth_to_cloud(DepthMap([[3.5]]), Image([[0.2]]), K)
    assert np.allclose(cloud.points, [[0.0, 0.0, 3.5]])
    assert np.allclose(cloud.colors, [[0.2, 0.2, 0.2]])


def test_plane_is_coplanar(wall_sample):
    cloud = depth_to_cloud(wall_sample.gt_depth, wall_sample.left, wall_sample.intrinsics)
    assert len(cloud) == wall_sample.gt_depth.count
    assert np.abs(cloud.points[:, 2] - 2.0).max() < 1e-9


def test_cloud_size_counts_valid_pixels(rng):
    valid = rng.random((6, 7)) > 0.4
    depth = DepthMap(rng.uniform(1, 3, (6, 7)), valid)
    cloud = depth_to_cloud(depth, Image(rng.random((6, 7, 3))), CameraIntrinsics(5.0, 5.0, 3.0, 2.5))
    assert len(cloud) == int(valid.sum())


def test_points_project_back_to_their_pixels(rng):
    K = CameraIntrinsics(30.0, 32.0, 4.5, 3.5)
    depth = DepthMap(rng.uniform(0.5, 5.0, (8, 10)))
    cloud = depth_to_cloud(depth, Image(np.zeros((8, 10))), K)
    rows, cols = np.nonzero(depth.valid)
    for point, r, c in zip(cloud.points, rows, cols):
        (u, v), _ = project(point, K)
        assert abs(u - c) < 1e-9 and abs(v - r) < 1e-9


def test_pose_moves_points_to_world():
    K = CameraIntrinsics(10.0, 10.0, 0.0, 0.0)
    pose = RigidTransform.from_translation((1.0, 2.0, 3.0))
    cloud = depth_to_cloud(DepthMap([[1.0]]), Image([[0.0]]), K, pose)
    assert np.allclose(cloud.points, [[1.0, 2.0, 4.0]])


def test_shape_mismatch():
    with pytest.raises(DomainError):
        depth_to_cloud(DepthMap(np.ones((2, 2))), Image(np.ones((3, 2))), CameraIntrinsics(1, 1, 0, 0))


@pytest.mark.parametrize("fmt", ["ascii", "binary_little_endian"])
def test_ply_files(tmp_path, rng, fmt):
    depth = DepthMap(rng.uniform(1, 3, (4, 5)))
    cloud = depth_to_cloud(depth, Image(rng.random((4, 5, 3))), CameraIntrinsics(5.0, 5.0, 2.0, 1.5))
    path = tmp_path / f"cloud_{fmt}.ply"
    data = write_ply(cloud, path, fmt)
    assert data.startswith(f"ply\nformat {fmt} 1.0\n".encode("ascii"))
    assert b"element vertex 20\n" in data

    loaded = read_ply(path)
    assert len(loaded) == 20
    assert np.allclose(loaded.points, cloud.points.astype(np.float32), atol=1e-6)
    assert np.abs(loaded.colors - cloud.colors).max() <= 0.5 / 255 + 1e-12


def test_binary_ply_layout(tmp_path):
    K = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    cloud = depth_to_cloud(DepthMap([[2.0]]), Image([[1.0]]), K)
    data = write_ply(cloud, tmp_path / "one.ply")
    body = data[data.index(b"end_header\n") + len(b"end_header\n") :]
    assert len(body) == 15
    assert np.frombuffer(body[8:12], "<f4")[0] == 2.0
    assert body[12:] == b"\xff\xff\xff"


def test_read_ply_rejects_other_files(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_bytes(b"not a ply file")
    with pytest.raises(FormatError):
        read_ply(path)
    with pytest.raises(DomainError):
        write_ply(depth_to_cloud(DepthMap([[1.0]]), Image([[0.0]]), CameraIntrinsics(1, 1, 0, 0)), path, "binary_big_endian")
