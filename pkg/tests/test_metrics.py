import math

import numpy as np
import pytest

from depthdistill.core.errors import DegenerateFitError, DomainError, EmptyDomainError
from depthdistill.core.grids import DepthMap
from depthdistill.metrics import boundary_disagreement, depth_metrics, median_scale


def naive_metrics(pred, gt):
    """Explicit double loop over the grid."""
    n = 0
    sums = dict.fromkeys(("mae", "abs_rel", "sq_rel", "sq", "sq_log", "log10", "d1", "d2", "d3"), 0.0)
    for r in range(gt.shape[0]):
        for c in range(gt.shape[1]):
            p, g = pred[r, c], gt[r, c]
            if not (p > 0 and g > 0):
                continue
            n += 1
            sums["mae"] += abs(p - g)
            sums["abs_rel"] += abs(p - g) / g
            sums["sq_rel"] += (p - g) ** 2 / g
            sums["sq"] += (p - g) ** 2
            sums["sq_log"] += (math.log(p) - math.log(g)) ** 2
            sums["log10"] += abs(math.log10(p) - math.log10(g))
            ratio = max(p / g, g / p)
            sums["d1"] += ratio < 1.25
            sums["d2"] += ratio < 1.25**2
            sums["d3"] += ratio < 1.25**3
    return {
        "mae": sums["mae"] / n,
        "abs_rel": sums["abs_rel"] / n,
        "sq_rel": sums["sq_rel"] / n,
        "rmse": math.sqrt(sums["sq"] / n),
        "rmse_log": math.sqrt(sums["sq_log"] / n),
        "log10": sums["log10"] / n,
        "delta1": sums["d1"] / n,
        "delta2": sums["d2"] / n,
        "delta3": sums["d3"] / n,
    }


def test_perfect_prediction(rng):
    gt = rng.uniform(0.5, 8.0, (6, 6))
    m = depth_metrics(gt, gt)
    assert (m.mae, m.abs_rel, m.rmse, m.rmse_log) == (0.0, 0.0, 0.0, 0.0)
    assert (m.delta1, m.delta2, m.delta3) == (1.0, 1.0, 1.0)


def test_single_pixel_hand_evaluated():
    m = depth_metrics(np.array([[2.0]]), np.array([[1.0]]))
    assert m.mae == 1.0
    assert m.abs_rel == 1.0
    assert m.rmse == 1.0
    assert m.rmse_log == pytest.approx(math.log(2.0), abs=1e-15)
    assert (m.delta1, m.delta2, m.delta3) == (0.0, 0.0, 0.0)


def test_uniform_scale_error(rng):
    gt = rng.uniform(0.5, 8.0, (5, 7))
    m = depth_metrics(1.2 * gt, gt)
    assert m.abs_rel == pytest.approx(0.2, abs=1e-12)
    assert m.delta1 == 1.0


def test_matches_naive_oracle(rng):
    for _ in range(100):
        gt = rng.uniform(0.2, 10.0, (32, 32))
        pred = gt * rng.uniform(0.5, 1.8, gt.shape)
        gt[rng.random(gt.shape) < 0.1] = 0.0
        expected = naive_metrics(pred, gt)
        record = depth_metrics(pred, gt).as_record()
        for key, value in expected.items():
            assert record[key] == pytest.approx(value, abs=1e-12)
        assert record["delta1"] <= record["delta2"] <= record["delta3"]


def test_symmetry(rng):
    a = rng.uniform(1.0, 4.0, (8, 8))
    b = rng.uniform(1.0, 4.0, (8, 8))
    assert depth_metrics(a, b).rmse == pytest.approx(depth_metrics(b, a).rmse, abs=1e-15)
    assert depth_metrics(a, b).abs_rel != pytest.approx(depth_metrics(b, a).abs_rel)


def test_cap_and_mask():
    gt = np.array([[1.0, 2.0, 12.0]])
    pred = np.array([[1.0, 2.0, 1.0]])
    assert depth_metrics(pred, gt, cap=10.0).mae == 0.0
    assert depth_metrics(pred, gt, cap=10.0).count == 2
    assert depth_metrics(pred, gt, mask=np.array([[False, True, False]])).count == 1


def test_errors():
    with pytest.raises(EmptyDomainError):
        depth_metrics(np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(DomainError):
        depth_metrics(np.ones((2, 2)), np.ones((2, 3)))


def test_median_scale():
    gt = DepthMap(np.array([[1.0, 2.0, 3.0, 4.0, 5.0]]))
    scaled, factor = median_scale(DepthMap(2 * gt.data), gt)
    assert factor == 0.5
    assert np.allclose(scaled.data, gt.data)
    assert median_scale(gt, gt)[1] == 1.0

    outlier = gt.data.copy()
    outlier[0, 4] = 1000.0
    assert median_scale(DepthMap(outlier), gt)[1] == 1.0


def test_median_scale_zero_median():
    pred = DepthMap(np.zeros((1, 3)), np.ones((1, 3), dtype=bool))
    with pytest.raises(DegenerateFitError):
        median_scale(pred, DepthMap(np.ones((1, 3))))


def test_format_table_lists_columns():
    table = depth_metrics(np.array([[2.0]]), np.array([[1.0]])).format_table()
    header, row = table.splitlines()
    assert header.split() == ["MAE", "AbsRel", "SqRel", "RMSE", "RMSE_log", "log10", "d1", "d2", "d3"]
    assert len(row.split()) == 9


def test_boundary_disagreement():
    a = np.array([[1, 0], [0, 0]])
    b = np.array([[1, 1], [0, 0]])
    assert boundary_disagreement(a, b) == 0.25
    assert boundary_disagreement(a, b, np.array([[True, True], [False, False]])) == 0.5
