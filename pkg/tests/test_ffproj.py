import json
import math

import numpy as np
import pytest

from plateau.complexes import Complex, grid_complex
from plateau.dyadic import Cell, dist_to_cell_boundary
from plateau.ffproj import (
    CenterExhausted,
    RadialProjection,
    average_projection_check,
    boundary_faces,
    ff_project,
    ff_sweep,
    prune_low_mass_dcells,
    radial_project,
    select_center,
)
from plateau.measure import (
    SampledSet,
    hausdorff_estimate,
    sample_circle,
    sample_polyline,
    sample_segment,
    sample_square_boundary,
    union,
)
from plateau.rng import stream

SQUARE2 = Cell.make((-1, -1), 0b11, -1)  # [-1,1]^2
UNIT = Cell.make((0, 0), 0b11, 0)  # [0,1]^2


# ------------------------------------------------------ radial projection

def test_radial_axis_ray():
    img = radial_project(SQUARE2, (0.0, 0.0), (0.5, 0.0))
    assert np.array_equal(img, [1.0, 0.0])


def test_radial_corner_scaling():
    img = radial_project(SQUARE2, (0.0, 0.0), (0.25, 0.25))
    assert np.array_equal(img, [1.0, 1.0])
    # from the center of [-1,1]^2 the exit parameter is 1/max|y_i|
    rng = stream(0, "radial-oracle")
    for _ in range(50):
        y = rng.uniform(-0.95, 0.95, size=2)
        if np.max(np.abs(y)) < 1e-3:
            continue
        img = radial_project(SQUARE2, (0.0, 0.0), y)
        assert np.allclose(img, y / np.max(np.abs(y)), atol=1e-12)
        assert np.max(np.abs(img)) == 1.0


def test_radial_boundary_point_fixed():
    img = radial_project(SQUARE2, (0.0, 0.0), (1.0, 0.3))
    assert img[0] == 1.0
    assert img[1] == pytest.approx(0.3, abs=1e-12)


def test_radial_errors():
    with pytest.raises(ValueError):
        radial_project(SQUARE2, (0.0, 0.0), (2.0, 0.0))
    with pytest.raises(ValueError):
        radial_project(SQUARE2, (1.0, 0.0), (0.5, 0.0))
    with pytest.raises(ValueError):
        radial_project(SQUARE2, (0.2, 0.2), (0.2, 0.2))
    with pytest.raises(ValueError):
        radial_project(Cell.make((0, 0), 0, 0), (0.0, 0.0), (0.0, 0.0))


def test_radial_edge_cell_stays_on_line():
    edge = Cell.make((0, 0), 0b01, 0)  # [0,1] x {0}
    img = radial_project(edge, (0.4, 0.0), (0.7, 0.0))
    assert np.array_equal(img, [1.0, 0.0])
    img = radial_project(edge, (0.4, 0.0), (0.1, 0.0))
    assert np.array_equal(img, [0.0, 0.0])


def test_radial_guard_clamp():
    # u = (0.1, 0), exit parameter 10, clamped by |u|/delta = 0.2
    img = radial_project(SQUARE2, (0.0, 0.0), (0.1, 0.0), delta=0.5)
    assert np.allclose(img, [0.2, 0.0], atol=1e-15)
    # continuous at the guard sphere
    img = radial_project(SQUARE2, (0.0, 0.0), (0.5, 0.0), delta=0.5)
    assert np.array_equal(img, [1.0, 0.0])
    # center maps to itself under a guarded projection
    img = radial_project(SQUARE2, (0.2, 0.1), (0.2, 0.1), delta=0.3)
    assert np.allclose(img, [0.2, 0.1])


def test_radial_lipschitz_outside_guard():
    delta = 0.2
    diam = SQUARE2.diameter()
    rng = stream(1, "radial-lip")
    pts = []
    while len(pts) < 200:
        y = rng.uniform(-1.0, 1.0, size=2)
        if np.linalg.norm(y) >= delta:
            pts.append(y)
    pts = np.array(pts)
    imgs = np.array([radial_project(SQUARE2, (0.0, 0.0), y) for y in pts])
    worst = 0.0
    for i in range(len(pts)):
        dx = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        dv = np.linalg.norm(imgs[i + 1:] - imgs[i], axis=1)
        good = dx > 1e-12
        if good.any():
            worst = max(worst, float(np.max(dv[good] / dx[good])))
    assert worst <= 10.0 * diam / delta


def test_radial_projection_validation():
    with pytest.raises(ValueError):
        RadialProjection(UNIT, np.array([0.1, 0.1]), 0.05)
    with pytest.raises(ValueError):
        RadialProjection(UNIT, np.array([0.5, 0.5]), 0.5)
    with pytest.raises(ValueError):
        RadialProjection(Cell.make((0, 0), 0, 0), np.array([0.0, 0.0]), 0.1)
    rp = RadialProjection(UNIT, np.array([0.5, 0.5]), 0.2)
    assert json.dumps(rp.to_json())


def test_boundary_faces_of_square():
    faces = boundary_faces(UNIT)
    assert len(faces) == 4
    assert all(G.dim == 1 for G in faces)
    anchors = {tuple(a.to_float() for a in G.anchor) for G in faces}
    assert anchors == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)}


# ------------------------------------------------ averaged projections

def test_average_check_boundary_set_identity():
    S = sample_square_boundary(0.0, 1.0, 0.021)
    out = average_projection_check(UNIT, S, 40, stream(2, "avg-id"),
                                   delta=0.037)
    assert out["n_admissible"] > 0
    assert all(r == 1.0 for r in out["ratios"])
    assert out["avg_ratio"] == 1.0


def test_average_check_single_point():
    S = SampledSet(1, np.array([[0.05, 0.05]]), np.array([1.0]), 0.05)
    out = average_projection_check(UNIT, S, 30, stream(3, "avg-pt"))
    assert out["n_admissible"] == 30
    assert out["avg_ratio"] == 1.0
    assert math.isfinite(out["quantiles"]["q90"])


def test_average_check_normalization():
    S = sample_segment((0.1, 0.2), (0.8, 0.6), 0.02)
    out = average_projection_check(UNIT, S, 25, stream(4, "avg-norm"))
    vol_half = 0.25
    expected = out["avg_ratio"] * vol_half / UNIT.diameter() ** 2
    assert out["normalized_integral"] == pytest.approx(expected, rel=1e-12)


def test_average_check_scale_invariance():
    verts = np.array([[0.2, 0.3], [0.8, 0.5], [0.4, 0.7]])
    S1 = sample_polyline(verts, 0.021)
    S2 = SampledSet(1, 2.0 * S1.points, 2.0 * S1.weights, 2.0 * S1.delta)
    Q2 = Cell.make((0, 0), 0b11, -1)
    out1 = average_projection_check(UNIT, S1, 60, stream(7, "avg-scale"))
    out2 = average_projection_check(Q2, S2, 60, stream(7, "avg-scale"))
    assert out1["n_admissible"] == out2["n_admissible"]
    assert abs(out1["avg_ratio"] - out2["avg_ratio"]) <= 0.1 * out1["avg_ratio"]


def test_average_check_dense_set_raises():
    g = np.arange(0.2, 0.8001, 0.05)
    pts = np.array([[a, b] for a in g for b in g])
    S = SampledSet(1, pts, np.full(len(pts), 0.05), 0.05)
    with pytest.raises(ValueError, match="admissible"):
        average_projection_check(UNIT, S, 50, stream(8, "avg-dense"))


# ------------------------------------------------------- center selection

def test_select_center_empty_cell():
    F = SampledSet(1, np.array([[5.0, 5.0]]), np.array([1.0]), 0.1)
    rp = select_center(UNIT, F, [UNIT], rng=stream(9, "sel-empty"))
    assert np.all(np.abs(rp.center - 0.5) <= 0.25 + 1e-12)
    wall = dist_to_cell_boundary(UNIT, rp.center)
    assert rp.delta == pytest.approx(0.5 * wall, rel=1e-12)


def test_select_center_segment_all_seeds():
    F = sample_segment((0.0, 0.0), (1.0, 1.0), 0.02)
    diam = UNIT.diameter()
    hits = 0
    for seed in range(100):
        rp = select_center(UNIT, F, [UNIT], rng=stream(seed, "sel-seeds"))
        clearance = float(np.min(np.linalg.norm(F.points - rp.center,
                                                axis=1)))
        assert clearance >= diam / 8.0 - 1e-12
        assert rp.delta == pytest.approx(
            0.5 * min(clearance, dist_to_cell_boundary(UNIT, rp.center)),
            rel=1e-12)
        hits += 1
    assert hits == 100


def test_select_center_dense_set_exhausts():
    g = np.arange(0.0, 1.0001, 0.02)
    pts = np.array([[a, b] for a in g for b in g])
    F = SampledSet(1, pts, np.full(len(pts), 0.02), 0.02)
    with pytest.raises(CenterExhausted) as err:
        select_center(UNIT, F, [UNIT], rng=stream(10, "sel-dense"))
    assert err.value.tries == 64
    assert err.value.cell == UNIT


def test_select_center_rejects_vertex():
    F = SampledSet(1, np.array([[5.0, 5.0]]), np.array([1.0]), 0.1)
    with pytest.raises(ValueError):
        select_center(Cell.make((0, 0), 0, 0), F, [], rng=stream(0, "x"))


# --------------------------------------------------------------- sweeps

def test_sweep_ignores_skeleton_samples():
    K = grid_complex((0, 0), (1, 1), 1)
    pts = np.array([[0.25, 0.0], [0.5, 0.75], [0.0, 0.125]])
    F = SampledSet(1, pts, np.full(3, 0.1), 0.05)
    out = ff_sweep(K, 2, F, {})
    assert np.array_equal(out.points, pts)


def test_sweep_missing_center_raises():
    K = grid_complex((0, 0), (1, 1), 1)
    F = SampledSet(1, np.array([[0.3, 0.3]]), np.array([0.1]), 0.05)
    with pytest.raises(ValueError, match="no projection center"):
        ff_sweep(K, 2, F, {})


def test_sweep_single_cell_lands_on_walls():
    K = grid_complex((0, 0), (1, 1), 0)
    A = UNIT
    F = sample_segment((0.1, 0.1), (0.9, 0.9), 0.01)
    rp = select_center(A, F, K.cells_containing(A), rng=stream(11, "sweep1"))
    out = ff_sweep(K, 2, F, {A: rp})
    on_wall = (out.points == 0.0) | (out.points == 1.0)
    assert np.all(on_wall.any(axis=1))
    delta = 2.0 * F.delta
    ratio = hausdorff_estimate(out, delta) / hausdorff_estimate(F, delta)
    assert ratio <= 20.0


def test_sweep_gluing_across_shared_face():
    K = grid_complex((0, 0), (2, 1), 0)
    eps = 1e-8
    pts = np.array([
        [1.0, 0.3], [1.0, 0.62],                 # on the shared face
        [1.0 - eps, 0.37], [1.0 + eps, 0.37],    # straddling pair
    ])
    E = SampledSet(1, pts, np.full(4, 0.01), 0.01)
    res = ff_project(K, 1, E, rng=stream(12, "glue"))
    out = res.mapped.points
    assert np.array_equal(out[:2], pts[:2])
    assert out[2, 0] == 1.0 and out[3, 0] == 1.0
    assert np.linalg.norm(out[2] - out[3]) <= 1e-5


# ------------------------------------------------------------ ff_project

def test_ff_identity_on_skeleton():
    K = grid_complex((0, 0), (1, 1), 1)
    pts = np.array([[0.25, 0.0], [0.25, 0.5], [0.0, 0.125], [0.5, 0.5]])
    E = SampledSet(1, pts, np.full(4, 0.1), 0.05)
    res = ff_project(K, 1, E, rng=stream(13, "ff-id"))
    assert np.array_equal(res.mapped.points, pts)
    assert all(c["ok"] for c in res.checks.values())
    assert all(not cells["cells"] for cells in res.diagnostics["stages"])


def test_ff_diagonal_two_by_two():
    K = grid_complex((0, 0), (1, 1), 1)
    E = sample_segment((0.0, 0.0), (1.0, 1.0), 0.01)
    res = ff_project(K, 1, E, rng=stream(14, "ff-diag"))
    for name, c in res.checks.items():
        assert c["ok"], name
    for p in res.mapped.points:
        M = K.minimal_cell_at(p)
        assert M is not None and M.dim <= 1
    delta = 2.0 * E.delta
    ratio = hausdorff_estimate(res.mapped, delta) / hausdorff_estimate(E, delta)
    assert ratio <= 20.0
    res.plan.validate()
    assert json.dumps(res.to_json())


def _curve_set(spacing: float) -> SampledSet:
    diag = sample_segment((0.0, 0.0), (1.0, 1.0), spacing)
    arc = sample_circle((0.5, 0.5), 0.3, spacing)
    return union(diag, arc)


def test_ff_postconditions_on_grid():
    K = grid_complex((0, 0), (1, 1), 2)
    E = _curve_set(0.01)
    res = ff_project(K, 1, E, rng=stream(15, "ff-grid"))
    for name, c in res.checks.items():
        assert c["ok"], (name, c)
    assert res.checks["cell_ratio"]["max_ratio"] <= 22.0
    assert res.checks["ratio_ledger"]["product"] <= 22.0
    stages = res.diagnostics["stages"]
    assert [s["m"] for s in stages] == [2]
    assert stages[0]["cells"], "expected occupied squares"
    for rec in stages[0]["cells"]:
        assert rec["ratio_H"] <= 20.0 + 1e-9
        assert rec["delta"] > 0.0


def test_ff_gamma_samples_preserved():
    K = grid_complex((0, 0), (1, 1), 1)
    gamma = sample_segment((0.0, 0.0), (1.0, 0.0), 0.01)
    interior = sample_segment((0.1, 0.2), (0.9, 0.8), 0.01)
    E = union(gamma, interior)
    res = ff_project(K, 1, E, rng=stream(16, "ff-gamma"))
    k = len(gamma)
    assert np.array_equal(res.mapped.points[:k], gamma.points)
    for p in res.mapped.points[:k]:
        assert p[1] == 0.0


def test_ff_dense_set_rejected_upfront():
    K = grid_complex((0, 0), (1, 1), 1)
    g = np.arange(0.0, 1.0001, 0.02)
    pts = np.array([[a, b] for a in g for b in g])
    E = SampledSet(1, pts, np.full(len(pts), 0.02), 0.02)
    with pytest.raises(ValueError, match="too dense"):
        ff_project(K, 1, E, rng=stream(17, "ff-dense"))


def test_ff_locally_dense_cell_exhausts():
    K = grid_complex((0, 0), (1, 1), 2)
    g = np.arange(0.0, 0.2501, 0.005)
    pts = np.array([[a, b] for a in g for b in g])
    E = SampledSet(1, pts, np.full(len(pts), 0.005), 0.005)
    with pytest.raises(CenterExhausted):
        ff_project(K, 1, E, rng=stream(18, "ff-local"))


def test_ff_dimension_mismatch_rejected():
    K = grid_complex((0, 0), (1, 1), 1)
    E = SampledSet(2, np.array([[0.3, 0.3]]), np.array([0.1]), 0.05)
    with pytest.raises(ValueError, match="dimension"):
        ff_project(K, 1, E)
    outside = SampledSet(1, np.array([[2.0, 2.0]]), np.array([0.1]), 0.05)
    with pytest.raises(ValueError, match="outside"):
        ff_project(K, 1, outside)


def test_ff_lipschitz_stable_across_levels():
    worst_by_level = []
    for level in (1, 2, 3):
        K = grid_complex((0, 0), (1, 1), level)
        E = _curve_set(0.01)
        res = ff_project(K, 1, E, rng=stream(19, f"ff-lip{level}"))
        level_worst = 0.0
        for (m, entries), diag in zip(res.plan.sweeps,
                                      res.diagnostics["stages"]):
            for (A, rp), rec in zip(entries, diag["cells"]):
                bound = 10.0 * A.diameter() / rp.delta
                assert rec["lip_est"] <= bound
                level_worst = max(level_worst, rec["lip_est"])
        worst_by_level.append(level_worst)
    assert max(worst_by_level) <= 160.0


# ---------------------------------------------------------------- pruning

def _pruning_setup():
    K = grid_complex((0, 0), (1, 1), 1)
    dense = sample_segment((0.0, 0.0), (1.0, 0.0), 0.01)
    stray = np.array([[0.7, 1.0]])
    pts = np.vstack([dense.points, stray])
    w = np.concatenate([dense.weights, [0.01]])
    return K, SampledSet(1, pts, w, dense.delta)


def test_prune_pushes_stray_sample():
    K, F = _pruning_setup()
    out = prune_low_mass_dcells(K, 1, F, 0.5, rng=stream(20, "prune"))
    moved = out.points[-1]
    assert moved[1] == 1.0
    assert moved[0] in (0.5, 1.0)
    assert np.array_equal(out.points[:-1], F.points[:-1])


def test_prune_idempotent():
    K, F = _pruning_setup()
    once = prune_low_mass_dcells(K, 1, F, 0.5, rng=stream(21, "prune-i"))
    twice = prune_low_mass_dcells(K, 1, once, 0.5, rng=stream(22, "prune-ii"))
    assert np.array_equal(once.points, twice.points)


def test_prune_zero_threshold_noop():
    K, F = _pruning_setup()
    out = prune_low_mass_dcells(K, 1, F, 0.0, rng=stream(23, "prune-z"))
    assert np.array_equal(out.points, F.points)


def test_prune_requires_curve_dimension():
    K, F = _pruning_setup()
    with pytest.raises(ValueError):
        prune_low_mass_dcells(K, 0, F, 0.5)
