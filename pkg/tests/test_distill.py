import concurrent.futures as cf

import numpy as np
import pytest

from depthdistill.core.errors import (
    ConfigurationError,
    DegenerateFitError,
    DomainError,
    EmptyDomainError,
    NoConsensusError,
)
from depthdistill.core.grids import BoundaryMap, DepthMap, GradientMap, RelativeDepthMap
from depthdistill.core.utils import central_difference
from depthdistill.losses import (
    DistillConfig,
    RansacConfig,
    align_least_squares,
    align_ransac,
    dist_loss,
    edges,
    invert_expert,
    soft_binarize,
    sobel,
    spatial_loss,
    stat_loss,
    turn_on_level,
)


# expert inversion


def test_invert_expert_examples():
    assert np.allclose(invert_expert(np.full((2, 2), 2.0)).data, 0.5)
    assert invert_expert(np.full((2, 2), 2.0)).valid.all()
    inverted = invert_expert(RelativeDepthMap(np.array([[4.0, 0.25]])))
    assert np.allclose(inverted.data, [[0.25, 4.0]])


def test_invert_expert_floor_marks_invalid():
    inverted = invert_expert(np.array([[1.0, 0.0, -2.0, np.nan]]), floor=1e-6)
    assert inverted.valid.tolist() == [[True, False, False, False]]


# alignment


def test_least_squares_identity(rng):
    depth = DepthMap(rng.uniform(1, 5, (6, 6)))
    params = align_least_squares(depth, depth).params
    assert params.a_s == pytest.approx(1.0)
    assert params.a_t == pytest.approx(0.0, abs=1e-12)


def test_least_squares_hand_solved():
    fit = align_least_squares(np.array([[1.0, 2.0, 3.0]]), np.array([[3.0, 5.0, 7.0]]))
    assert fit.params.a_s == pytest.approx(2.0)
    assert fit.params.a_t == pytest.approx(1.0)
    assert np.allclose(fit.aligned.data, [[3.0, 5.0, 7.0]])


def test_least_squares_planted(rng):
    x = rng.uniform(0.5, 3.0, (100, 100))
    y = 0.7 * x + 0.3 + rng.normal(0.0, 1e-9, x.shape)
    params = align_least_squares(x, y).params
    assert abs(params.a_s - 0.7) < 1e-6
    assert abs(params.a_t - 0.3) < 1e-6


def test_least_squares_is_optimal(rng):
    x = rng.uniform(0.5, 3.0, (20, 20))
    y = 1.3 * x - 0.2 + rng.normal(0.0, 0.05, x.shape)
    params = align_least_squares(x, y).params

    def sse(a_s, a_t):
        return float(np.sum((a_s * x + a_t - y) ** 2))

    best = sse(params.a_s, params.a_t)
    for ds in (-1e-3, 0.0, 1e-3):
        for dt in (-1e-3, 0.0, 1e-3):
            assert sse(params.a_s + ds, params.a_t + dt) >= best


def test_least_squares_scale_equivariance(rng):
    x = rng.uniform(0.5, 3.0, (10, 10))
    y = rng.uniform(1.0, 4.0, (10, 10))
    base = align_least_squares(x, y).params
    scaled = align_least_squares(2.5 * x, y).params
    assert scaled.a_s == pytest.approx(base.a_s / 2.5, abs=1e-9)
    assert scaled.a_t == pytest.approx(base.a_t, abs=1e-9)


def test_least_squares_respects_validity_and_mask():
    expert = DepthMap(np.array([[1.0, 2.0, 3.0, 4.0]]), np.array([[True, True, True, False]]))
    student = np.array([[2.0, 4.0, 6.0, 100.0]])
    assert align_least_squares(expert, student).params.a_s == pytest.approx(2.0)
    mask = np.array([[True, True, False, True]])
    assert align_least_squares(expert, student, mask).inliers.sum() == 2


def test_least_squares_degenerate():
    with pytest.raises(DegenerateFitError):
        align_least_squares(np.full((3, 3), 2.0), np.arange(9.0).reshape(3, 3) + 1)
    with pytest.raises(DegenerateFitError):
        align_least_squares(np.array([[1.0]]), np.array([[2.0]]))


def test_ransac_noiseless_line(rng):
    x = rng.uniform(0.5, 3.0, (30, 30))
    fit = align_ransac(x, 0.7 * x + 0.3)
    assert fit.params.a_s == pytest.approx(0.7)
    assert fit.params.a_t == pytest.approx(0.3)
    assert fit.inliers.all()


def test_ransac_with_outliers(rng):
    sigma = 0.002
    x = rng.uniform(0.2, 1.0, (100, 100))
    y = 0.7 * x + 0.3 + rng.normal(0.0, sigma, x.shape)
    outliers = rng.random(x.shape) < 0.3
    y[outliers] = rng.uniform(0.0, 2.0, int(outliers.sum()))

    fit = align_ransac(x, y, RansacConfig(iterations=200, inlier_threshold=3 * sigma, seed=7))
    assert abs(fit.params.a_s - 0.7) < 0.007
    assert abs(fit.params.a_t - 0.3) < 0.003
    assert not fit.inliers[outliers].mean() > 0.05


def test_ransac_is_independent_of_worker_count(rng):
    x = rng.uniform(0.2, 1.0, (40, 40))
    y = 0.5 * x + rng.normal(0.0, 0.01, x.shape)
    serial = align_ransac(x, y, RansacConfig(workers=1, seed=3))
    threaded = align_ransac(x, y, RansacConfig(workers=4, seed=3))
    assert serial.params == threaded.params
    assert np.array_equal(serial.inliers, threaded.inliers)


def test_ransac_on_a_shared_executor(rng):
    x = rng.uniform(0.2, 1.0, (40, 40))
    y = 0.5 * x + rng.normal(0.0, 0.01, x.shape)
    cfg = RansacConfig(seed=3)
    own = align_ransac(x, y, cfg)
    with cf.ThreadPoolExecutor(max_workers=2) as pool:
        shared = [align_ransac(x, y, cfg, executor=pool) for _ in range(3)]
    assert all(fit.params == own.params for fit in shared)


def test_ransac_identical_points():
    with pytest.raises(DegenerateFitError):
        align_ransac(np.full((4, 4), 1.5), np.full((4, 4), 2.0))


def test_ransac_without_consensus(rng):
    x = rng.random((20, 20))
    y = rng.random((20, 20))
    with pytest.raises(NoConsensusError):
        align_ransac(x, y, RansacConfig(iterations=20, inlier_threshold=1e-6, min_inlier_fraction=0.5))


@pytest.mark.parametrize(
    "kwargs",
    [{"iterations": 0}, {"inlier_threshold": 0.0}, {"min_inlier_fraction": 0.0}, {"workers": 0}],
)
def test_ransac_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        RansacConfig(**kwargs)


# statistical loss


def test_stat_loss_self_is_zero(rng):
    depth = DepthMap(rng.uniform(1, 4, (8, 8)))
    assert stat_loss(depth, depth).value == pytest.approx(0.0, abs=1e-12)


def test_stat_loss_empty_overlap():
    expert = DepthMap(np.ones((4, 4)), np.zeros((4, 4), dtype=bool))
    with pytest.raises(EmptyDomainError):
        stat_loss(expert, DepthMap(np.ones((4, 4))))


def test_stat_loss_gradient(rng):
    student = rng.uniform(1.0, 3.0, (9, 10))
    valid = rng.random((9, 10)) > 0.15
    expert = DepthMap(rng.uniform(1.0, 3.0, (9, 10)), valid)
    analytic = stat_loss(expert, DepthMap(student)).grad
    indices = rng.choice(student.size, size=20, replace=False)
    numeric = central_difference(lambda s: stat_loss(expert, DepthMap(s)).value, student, 1e-6, indices)
    assert np.allclose(analytic.flat[indices], numeric, rtol=1e-3, atol=1e-9)


# boundaries


def test_sobel_constant_and_ramp():
    assert np.all(sobel(np.full((5, 6), 3.0)).magnitude == 0.0)
    ramp = np.tile(np.arange(7.0), (6, 1))
    gmap = sobel(ramp)
    assert np.all(gmap.gu[1:-1, 1:-1] == 8.0)
    assert np.all(gmap.gv == 0.0)


def test_sobel_step_is_linear_in_height():
    step = np.zeros((6, 8))
    step[:, 4:] = 1.0
    assert sobel(2 * step).magnitude.max() == 2 * sobel(step).magnitude.max()


def test_sobel_validity_and_size():
    valid = np.ones((6, 6), dtype=bool)
    valid[2, 2] = False
    gmap = sobel(DepthMap(np.ones((6, 6)), valid))
    assert not gmap.valid[1:4, 1:4].any()
    assert gmap.valid[0, 5]
    with pytest.raises(DomainError):
        sobel(np.ones((2, 5)))


def test_turn_on_level_examples():
    magnitudes = np.arange(1.0, 101.0).reshape(10, 10)
    gmap = GradientMap(magnitudes, np.zeros((10, 10)), magnitudes, np.ones((10, 10), dtype=bool))
    assert turn_on_level(gmap, 0.95) == 95.0
    assert turn_on_level(gmap, 0.9999) == 100.0
    flat = GradientMap.from_components(np.full((3, 3), 2.5), np.zeros((3, 3)))
    assert turn_on_level(flat, 0.95) == 2.5


def test_turn_on_level_empty():
    gmap = GradientMap.from_components(np.ones((3, 3)), np.ones((3, 3)), np.zeros((3, 3), dtype=bool))
    with pytest.raises(EmptyDomainError):
        turn_on_level(gmap)


def test_soft_binarize_threshold_and_saturation():
    boundary = soft_binarize(np.array([[2.0, 2.0 + 1e4]]), alpha=2.0, sharpness=50.0)
    assert boundary.soft[0, 0] == 0.0
    assert boundary.hard[0, 0] == 0
    assert boundary.soft[0, 1] > 0.999
    assert boundary.hard[0, 1] == 1


def test_spatial_loss_examples():
    soft = np.array([[0.5, -0.5], [-0.5, 0.5]])
    same = BoundaryMap.from_soft(soft)
    assert spatial_loss(same, same).value == 0.0

    ones = BoundaryMap(np.ones((2, 2)), np.ones((2, 2)))
    zeros = BoundaryMap(np.zeros((2, 2)), -np.ones((2, 2)))
    assert spatial_loss(ones, zeros).value == 1.0
    assert spatial_loss(ones, zeros).hard == 1.0

    flipped = soft.copy()
    flipped[0, 0] = -0.5
    assert spatial_loss(same, BoundaryMap.from_soft(flipped)).hard == 0.25


def test_spatial_loss_shape_mismatch():
    with pytest.raises(DomainError):
        spatial_loss(BoundaryMap.from_soft(np.zeros((2, 2))), BoundaryMap.from_soft(np.zeros((2, 3))))


def test_edges_of_a_step():
    depth = np.full((10, 10), 2.0)
    depth[:, 5:] = 4.0
    _, alpha, boundary = edges(DepthMap(depth), quantile=0.5)
    assert alpha == 0.0
    assert boundary.hard[:, 4:6].all()
    assert not boundary.hard[:, :4].any()
    assert not boundary.hard[:, 6:].any()


# combined loss


def test_dist_loss_self_is_zero(rng):
    depth = DepthMap(rng.uniform(1, 4, (10, 10)))
    result = dist_loss(depth, depth)
    assert result.value == pytest.approx(0.0, abs=1e-12)
    assert result.l_spat_hard == 0.0


def test_dist_loss_weight_collapse(rng):
    expert = DepthMap(rng.uniform(1, 4, (10, 10)))
    student = DepthMap(rng.uniform(1, 4, (10, 10)))
    result = dist_loss(expert, student, DistillConfig(spat_weight=0.0))
    assert result.value == result.l_stat


def test_distill_config_combine():
    assert DistillConfig().combine(0.2, 0.1) == pytest.approx(0.21, abs=1e-12)


def test_spatial_gradient(rng):
    expert = DepthMap(rng.uniform(1.0, 3.0, (10, 11)))
    student = rng.uniform(1.0, 3.0, (10, 11))
    cfg = DistillConfig(stat_weight=0.0, spat_weight=1.0, softsign_sharpness=2.0)
    alphas = dist_loss(expert, DepthMap(student), cfg).alphas
    analytic = dist_loss(expert, DepthMap(student), cfg, alphas=alphas).grad
    indices = rng.choice(student.size, size=20, replace=False)

    def value(s):
        return dist_loss(expert, DepthMap(s), cfg, alphas=alphas).value

    numeric = central_difference(value, student, 1e-6, indices)
    assert np.allclose(analytic.flat[indices], numeric, rtol=1e-3, atol=1e-9)


def test_alignment_of_simulated_expert_in_inverse_space(boxes_sample):
    from depthdistill.synthscene import ExpertSimConfig, expert_from_gt

    gt = boxes_sample.gt_depth
    raw = expert_from_gt(gt, ExpertSimConfig(scale=2.0, shift=0.1))
    inverse_gt = DepthMap(np.where(gt.valid, 1.0 / np.where(gt.valid, gt.data, 1.0), 0.0), gt.valid)
    fit = align_least_squares(DepthMap(raw.data, gt.valid), inverse_gt)
    assert fit.params.a_s == pytest.approx(0.5, abs=1e-9)
    assert fit.params.a_t == pytest.approx(-0.05, abs=1e-9)
    residual = fit.aligned.data[gt.valid] - inverse_gt.data[gt.valid]
    assert np.abs(residual).max() < 1e-9


def test_stat_loss_of_unrelated_maps(rng):
    student = DepthMap(rng.uniform(1.0, 3.0, (12, 12)))
    valid = rng.random((12, 12)) > 0.2
    expert = DepthMap(rng.uniform(1.0, 3.0, (12, 12)), valid)
    result = stat_loss(expert, student)
    assert 0.0 < result.value <= 2.0
    assert result.grad.shape == (12, 12)
    assert np.all(np.isfinite(result.grad))
    assert dist_loss(expert, student).l_stat == result.value


def test_loss_ranges(rng):
    for _ in range(20):
        depth = rng.uniform(1.0, 4.0, (10, 10))
        other = rng.uniform(1.0, 4.0, (10, 10))
        for expert in (other, 5.0 - depth):
            assert 0.0 <= stat_loss(DepthMap(expert), DepthMap(depth)).value <= 2.0
        soft = BoundaryMap.from_soft(rng.uniform(-1.0, 1.0, (10, 10)))
        soft_other = BoundaryMap.from_soft(rng.uniform(-1.0, 1.0, (10, 10)))
        assert 0.0 <= spatial_loss(soft, soft_other).value <= 1.0
    # an inverted copy is anti-correlated everywhere
    assert stat_loss(DepthMap(5.0 - depth), DepthMap(depth)).value > 1.0


def test_spatial_loss_hard_symmetry(rng):
    valid = rng.random((10, 10)) > 0.3
    first = BoundaryMap.from_soft(rng.uniform(-1.0, 1.0, (10, 10)), valid)
    second = BoundaryMap.from_soft(rng.uniform(-1.0, 1.0, (10, 10)))
    assert spatial_loss(first, second).hard == spatial_loss(second, first).hard
    assert spatial_loss(first, second).value == spatial_loss(second, first).value


def test_hard_boundaries_ignore_affine_depth_changes(rng):
    depth = rng.uniform(1.0, 4.0, (16, 16))
    _, alpha, boundary = edges(DepthMap(depth))
    _, alpha_moved, moved = edges(DepthMap(2.0 * depth + 0.5))
    assert alpha_moved == pytest.approx(2.0 * alpha, rel=1e-9)
    assert np.array_equal(moved.hard, boundary.hard)
