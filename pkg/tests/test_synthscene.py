import math
from dataclasses import replace

import numpy as np
import pytest

from depthdistill.core.errors import ConfigurationError, DomainError, UnknownPresetError
from depthdistill.core.grids import DepthMap, validate
from depthdistill.geometry import bilinear_sample, pixel_rays
from depthdistill.losses import RansacConfig, align_ransac
from depthdistill.synthscene import (
    PRESETS,
    Box,
    ExpertSimConfig,
    Plane,
    SceneSpec,
    Texture,
    expert_from_gt,
    preset,
    relative_pose,
    render,
    render_sequence,
    scene_from_document,
    scene_to_document,
    visibility_mask,
)


def test_fronto_parallel_plane_depth(wall_sample):
    assert wall_sample.gt_depth.valid.all()
    assert np.allclose(wall_sample.gt_depth.data, 2.0, atol=1e-12)
    assert validate(wall_sample.left).ok


def test_stereo_column_shift(wall_sample):
    s = wall_sample
    disparity = s.intrinsics.fx * 0.13 / 2.0
    h, w = s.left.shape
    v, u = np.mgrid[4 : h - 4, 12 : w - 4].astype(float)
    target = s.left.data[4 : h - 4, 12 : w - 4]

    def error(shift):
        return float(np.abs(bilinear_sample(s.right, (u - shift, v)).values - target).mean())

    shifts = np.arange(0.0, 8.0, 0.05)
    best = shifts[int(np.argmin([error(x) for x in shifts]))]
    assert abs(best - disparity) <= 0.1


def test_render_is_deterministic(wall_spec):
    noisy = replace(wall_spec, image_noise=0.01, seed=5)
    a, b = render(noisy), render(noisy)
    assert np.array_equal(a.left.data, b.left.data)
    assert np.array_equal(a.right.data, b.right.data)
    assert np.array_equal(a.gt_depth.data, b.gt_depth.data)
    other = render(replace(noisy, seed=6))
    assert not np.array_equal(a.left.data, other.left.data)


def test_render_frame_out_of_range(wall_spec):
    with pytest.raises(DomainError):
        render(wall_spec, 1)


def test_empty_scene_has_no_valid_depth():
    sample = render(SceneSpec(width=8, height=8))
    assert sample.gt_depth.count == 0


def test_render_sequence_keeps_order():
    spec = preset("trajectory", resolution=24)
    samples = render_sequence(spec, [3, 0])
    assert [s.frame for s in samples] == [3, 0]
    assert np.array_equal(samples[1].left.data, render(spec, 0).left.data)


def test_visibility_mask_excludes_left_border(wall_sample):
    mask = visibility_mask(wall_sample)
    assert not mask[:, :3].any()
    assert mask[:, 5:].all()


def test_identity_expert_is_inverse_depth(boxes_sample):
    gt = boxes_sample.gt_depth
    expert = expert_from_gt(gt)
    assert np.array_equal(expert.data[gt.valid], 1.0 / gt.data[gt.valid])


def test_monotone_expert_preserves_ordering(boxes_sample, rng):
    gt = boxes_sample.gt_depth
    expert = expert_from_gt(gt, ExpertSimConfig(scale=2.0, shift=0.1, gamma=1.5))
    idx = np.flatnonzero(gt.valid)
    p, q = rng.choice(idx, 500), rng.choice(idx, 500)
    g, e = gt.data.ravel(), expert.data.ravel()
    distinct = np.abs(g[p] - g[q]) > 1e-9
    p, q = p[distinct], q[distinct]
    assert np.array_equal(np.sign(g[p] - g[q]), -np.sign(e[p] - e[q]))


def test_noisy_expert_ransac_recovers_planted_line(boxes_sample):
    gt = boxes_sample.gt_depth
    sigma = 5e-4
    model = ExpertSimConfig(scale=2.0, shift=0.1, noise_sigma=2 * sigma, outlier_fraction=0.3, seed=3)
    raw = expert_from_gt(gt, model)
    inverse_gt = DepthMap(np.where(gt.valid, 1.0 / np.where(gt.valid, gt.data, 1.0), 0.0), gt.valid)
    cfg = RansacConfig(iterations=300, inlier_threshold=3 * sigma, min_inlier_fraction=0.3)
    fit = align_ransac(DepthMap(raw.data, gt.valid & (raw.data > 0)), inverse_gt, cfg)
    assert fit.params.a_s == pytest.approx(0.5, rel=0.01)
    assert fit.params.a_t == pytest.approx(-0.05, rel=0.01)


def test_expert_config_validation():
    with pytest.raises(ConfigurationError):
        ExpertSimConfig(scale=0.0)
    with pytest.raises(ConfigurationError):
        ExpertSimConfig(outlier_fraction=1.0)


def test_default_boxes_preset(boxes_sample):
    spec = preset("default-boxes")
    assert (spec.width, spec.height) == (256, 256)
    assert sum(isinstance(p, Box) and p.texture.kind == "checker" for p in spec.primitives) >= 3
    depths = boxes_sample.gt_depth.values()
    assert depths.min() >= 1.0
    assert depths.max() <= 6.0 + 1e-9


def test_untextured_wall_preset():
    spec = preset("untextured-wall", resolution=64)
    walls = [p for p in spec.primitives if isinstance(p, Plane) and p.texture.kind == "flat"]
    assert len(walls) == 1
    normal = np.asarray(walls[0].normal) / np.linalg.norm(walls[0].normal)
    assert math.degrees(math.acos(abs(normal[2]))) == pytest.approx(16.7, abs=0.1)
    floors = [p for p in spec.primitives if isinstance(p, Plane) and p.texture.kind == "checker"]
    assert len(floors) == 1

    gt = render(spec, 0).gt_depth
    assert gt.valid.all()
    rays = pixel_rays(64, 64, spec.intrinsics)
    on_wall = np.isclose(gt.data, 5.0 / (1.0 - 0.3 * rays[:, :, 0]), rtol=1e-9)
    with np.errstate(divide="ignore"):
        on_floor = np.isclose(gt.data, 1.0 / rays[:, :, 1], rtol=1e-9)
    assert (on_wall | on_floor).all()
    assert 0.6 < on_wall.mean() < 0.75
    assert on_wall[0].all() and on_floor[-1].all()
    wall = gt.data[on_wall]
    assert 4.2 < wall.min() < 4.4 and 5.9 < wall.max() < 6.1
    # slanted: depth grows left to right along the top row
    assert np.all(np.diff(gt.data[0]) > 0)


def test_trajectory_preset():
    spec = preset("trajectory")
    assert spec.frames == 10
    for k in range(9):
        step = relative_pose(spec, k, k + 1)
        angle = math.degrees(math.acos(np.clip((np.trace(step.rotation) - 1) / 2, -1, 1)))
        assert angle == pytest.approx(1.0, abs=1e-9)
        moved = spec.trajectory[k + 1].translation - spec.trajectory[k].translation
        assert np.linalg.norm(moved) == pytest.approx(0.02, abs=1e-12)


def test_unknown_preset_lists_names():
    with pytest.raises(UnknownPresetError) as e:
        preset("living-room")
    for name in PRESETS:
        assert name in str(e.value)


def test_box_behind_every_camera_is_rejected():
    with pytest.raises(ConfigurationError):
        SceneSpec(primitives=(Box((0.0, 0.0, -5.0), (1.0, 1.0, 1.0)),))


def test_texture_validation():
    with pytest.raises(ConfigurationError):
        Texture("marble")


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_scene_document_round_trip(name):
    text = scene_to_document(preset(name, resolution=32))
    spec = scene_from_document(text)
    assert scene_to_document(spec) == text
    assert spec.width == 32
    assert spec.frames == preset(name).frames


def test_scene_document_rejects_unknown_keys():
    text = scene_to_document(preset("default-boxes")).replace("[scene]\n", "[scene]\nexposure = 2\n")
    with pytest.raises(ConfigurationError):
        scene_from_document(text)
