import numpy as np
import pytest
import torch

from vodepth.geometry import (SparseDisparityMap, StereoRig, depth_to_disparity, disparity_to_depth,
                              project_point, project_points, rasterize)


@pytest.fixture
def rig():
    return StereoRig.kitti_like(64, 128)


def test_kitti_like_proportions(rig):
    assert rig.fx == pytest.approx(0.58 * 128)
    assert rig.baseline == 0.54
    assert (rig.height, rig.width) == (64, 128)


def test_invalid_rig():
    with pytest.raises(ValueError):
        StereoRig(0, 1, 0, 0, 1, 4, 4)
    with pytest.raises(ValueError):
        StereoRig(1, 1, 0, 0, 0.5, 0, 4)


def test_column_shift_is_fx_b_over_z(rig, rng):
    for _ in range(50):
        p = np.array([rng.uniform(-5, 5), rng.uniform(-2, 2), rng.uniform(2, 60)])
        ul, vl = project_point(p, rig, "left")
        ur, vr = project_point(p, rig, "right")
        assert ul - ur == pytest.approx(rig.fx * rig.baseline / p[2], rel=1e-14)
        assert vl == vr


def test_center_projects_to_principal_point(rig):
    assert project_point([0, 0, 10], rig) == (rig.cx, rig.cy)


def test_projection_errors(rig):
    with pytest.raises(ValueError):
        project_point([0, 0, -1], rig)
    with pytest.raises(ValueError):
        project_point([0, 0, 1], rig, "middle")


def test_depth_disparity_round_trip(rig, rng):
    z = rng.uniform(0.5, 100, 1000)
    np.testing.assert_allclose(disparity_to_depth(depth_to_disparity(z, rig), rig), z, rtol=1e-12)
    assert isinstance(depth_to_disparity(10.0, rig), float)
    with pytest.raises(ValueError):
        depth_to_disparity(0.0, rig)
    with pytest.raises(ValueError):
        disparity_to_depth(np.array([1.0, -1.0]), rig)


def test_rasterize_rounds_and_drops_outside(rig):
    z = 10.0
    # lands at column 2.4 -> 2 and row 3.6 -> 4
    p = [((2.4 - rig.cx) * z / rig.fx, (3.6 - rig.cy) * z / rig.fy, z)]
    sd = rasterize(np.array(p + [[1e3, 0, 1.0]]), rig)
    assert sd.mask.sum() == 1
    assert sd.mask[0, 0, 4, 2] == 1
    assert sd.values[0, 0, 4, 2].item() == pytest.approx(rig.fx * rig.baseline / z)


def test_rasterize_nearest_wins(rig):
    pts = np.array([[0, 0, 20.0], [0, 0, 5.0], [0, 0, 30.0]])
    sd = rasterize(pts, rig)
    r, c = int(np.floor(rig.cy + 0.5)), int(np.floor(rig.cx + 0.5))
    assert sd.values[0, 0, r, c].item() == pytest.approx(rig.fx * rig.baseline / 5.0)


def test_rasterize_right_view_shifts(rig):
    pt = np.array([[0.0, 0.0, 8.0]])
    l, r = rasterize(pt, rig, "left"), rasterize(pt, rig, "right")
    cl = int(torch.nonzero(l.mask[0, 0])[0, 1])
    cr = int(torch.nonzero(r.mask[0, 0])[0, 1])
    assert abs((cl - cr) - rig.fx * rig.baseline / 8.0) <= 1.0


def test_rasterize_empty(rig):
    sd = rasterize(np.zeros((0, 3)), rig)
    assert sd.density == 0.0


def test_sparse_map_helpers():
    sd = SparseDisparityMap.empty(3, 4)
    assert sd.values.shape == (1, 1, 3, 4)
    v = torch.zeros(1, 1, 3, 4)
    v[..., 0] = 2
    m = (v > 0).float()
    f = SparseDisparityMap(v, m).flipped()
    assert f.values[0, 0, 0, -1] == 2 and f.mask[0, 0, 0, 0] == 0
    assert SparseDisparityMap(v, m).to(torch.float64).values.dtype == torch.float64
    with pytest.raises(ValueError):
        SparseDisparityMap(v, torch.zeros(1, 1, 2, 2))


def test_resized_rig_scales_focal(rig):
    small = rig.resized(32, 64)
    assert small.fx == pytest.approx(rig.fx / 2)
    assert small.cx == pytest.approx((64 - 1) / 2)


def test_project_points_vectorised(rig, rng):
    pts = np.column_stack([rng.uniform(-3, 3, 10), rng.uniform(-1, 1, 10), rng.uniform(3, 30, 10)])
    uv = project_points(pts, rig)
    for p, (u, v) in zip(pts, uv):
        assert (u, v) == pytest.approx(project_point(p, rig))
