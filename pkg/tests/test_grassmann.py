import math

import numpy as np
import pytest
from scipy.stats import chisquare, ks_2samp

from plateau.grassmann import (
    AffinePlane,
    DistanceOne,
    GraphMap,
    LinearPlane,
    apply_isomorphism,
    disintegration_check,
    graph_norm_distance,
    graph_to_plane,
    haar_lines,
    haar_sample,
    hyperplane_line_bound,
    isomorphism_condition,
    line_set_measure,
    operator_norm,
    orthocomplement,
    plane_distance,
    plane_distance_restricted,
    plane_from_spanning,
    plane_to_graph,
    sphere_cap_line_measure,
)
from plateau.measure import sample_segment
from plateau.rng import stream


def line2(theta):
    return LinearPlane(np.array([[math.cos(theta), math.sin(theta)]]))


def random_pair(d, n, rng):
    return haar_sample(d, n, rng), haar_sample(d, n, rng)


# ---------------------------------------------------------------- types

def test_frame_orthonormality_enforced():
    with pytest.raises(ValueError):
        LinearPlane(np.array([[1.0, 1.0]]))
    with pytest.raises(ValueError):
        LinearPlane(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_projection_symmetric_idempotent():
    rng = stream(7, "proj")
    for d, n in [(1, 2), (1, 3), (2, 3), (2, 4)]:
        V = haar_sample(d, n, rng)
        P = V.projection()
        assert np.allclose(P, P.T, atol=1e-12)
        assert np.allclose(P @ P, P, atol=1e-10)


def test_plane_from_spanning_degenerate():
    with pytest.raises(ValueError):
        plane_from_spanning(np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))


# ------------------------------------------------------------- distance

def test_distance_identical_planes():
    V = line2(0.3)
    assert plane_distance(V, V) == 0.0


def test_distance_lines_at_angle():
    # oracle: for unit direction vectors the projector difference has
    # singular values |sin(angle)|; checked against an independent SVD norm
    V, W = line2(math.pi / 3), line2(math.pi / 3 - math.pi / 6)
    got = plane_distance(V, W)
    assert abs(got - 0.5) < 1e-10
    svd_norm = np.linalg.norm(V.projection() - W.projection(), 2)
    assert abs(got - svd_norm) < 1e-12


def test_distance_orthogonal_lines_is_one():
    assert abs(plane_distance(line2(0.0), line2(math.pi / 2)) - 1.0) < 1e-12


def test_distance_symmetric_and_bounded():
    rng = stream(11, "dist-bounds")
    for d, n in [(1, 2), (1, 3), (2, 3), (2, 4)]:
        for _ in range(100):
            V, W = random_pair(d, n, rng)
            dvw = plane_distance(V, W)
            assert 0.0 <= dvw <= 1.0 + 1e-12
            assert abs(dvw - plane_distance(W, V)) < 1e-12


def test_restricted_distance_matches():
    rng = stream(13, "restricted")
    for d, n in [(1, 2), (1, 3), (2, 3), (2, 4)]:
        for _ in range(125):
            V, W = random_pair(d, n, rng)
            full = plane_distance(V, W)
            assert abs(plane_distance_restricted(V, W) - full) < 1e-9
            assert abs(plane_distance_restricted(V, W, use_complement=True)
                       - full) < 1e-9
    V = haar_sample(2, 4, stream(13, "restricted-same"))
    assert plane_distance_restricted(V, V) == 0.0


def test_orthocomplement_isometry():
    rng = stream(17, "perp")
    for d, n in [(1, 2), (1, 3), (2, 3), (2, 4)]:
        for _ in range(125):
            V, W = random_pair(d, n, rng)
            lhs = plane_distance(orthocomplement(V), orthocomplement(W))
            assert abs(lhs - plane_distance(V, W)) < 1e-9


def test_orthocomplement_frames():
    V = haar_sample(2, 5, stream(19, "perp-frame"))
    U = orthocomplement(V)
    assert U.d == 3 and U.n == 5
    assert np.allclose(V.frame @ U.frame.T, 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        orthocomplement(LinearPlane(np.eye(3)))


# ------------------------------------------------------------ graph maps

def test_graph_zero_map_is_base():
    V = haar_sample(2, 4, stream(23, "graph-zero"))
    g = plane_to_graph(V, V)
    assert np.allclose(g.matrix, 0.0, atol=1e-12)
    assert plane_distance(graph_to_plane(g), V) < 1e-12
    assert graph_norm_distance(g) < 1e-12


def test_graph_slope_line():
    # W = line of slope t over the x-axis: phi is the 1x1 matrix [t]
    V = line2(0.0)
    t = 0.75
    W = plane_from_spanning(np.array([[1.0, t]]))
    g = plane_to_graph(V, W)
    assert abs(g.matrix[0, 0] - t) < 1e-12
    assert abs(graph_norm_distance(g) - t / math.sqrt(1 + t * t)) < 1e-12


def test_graph_scalar_one_gives_inv_sqrt2():
    V = line2(0.0)
    g = plane_to_graph(V, line2(math.pi / 4))
    assert abs(graph_norm_distance(g) - 1.0 / math.sqrt(2.0)) < 1e-12
    assert abs(plane_distance(V, line2(math.pi / 4))
               - 1.0 / math.sqrt(2.0)) < 1e-12


def test_graph_round_trip_and_norm_identity():
    rng = stream(29, "graph-rt")
    checked = 0
    for d, n in [(1, 2), (1, 3), (2, 3), (2, 4)]:
        while checked < 500:
            V, W = random_pair(d, n, rng)
            if plane_distance(V, W) >= 1.0 - 1e-6:
                continue
            g = plane_to_graph(V, W)
            assert plane_distance(graph_to_plane(g), W) < 1e-9
            assert abs(graph_norm_distance(g) - plane_distance(V, W)) < 1e-9
            checked += 1
        checked = max(0, checked - 125)


def test_graph_distance_one_raises():
    with pytest.raises(DistanceOne):
        plane_to_graph(line2(0.0), line2(math.pi / 2))


def test_graph_norm_distance_monotone_below_one():
    V = line2(0.0)
    U = orthocomplement(V)
    prev = -1.0
    for t in np.linspace(0.0, 50.0, 40):
        g = GraphMap(V, np.array([[t]]), U.frame)
        val = graph_norm_distance(g)
        assert val < 1.0
        assert val > prev
        prev = val


def test_graph_stretch_bound():
    # for x in W, |x| <= |p_V(x)| / sqrt(1 - d(V,W)^2)
    rng = stream(31, "stretch")
    for _ in range(200):
        V, W = random_pair(2, 4, rng)
        dvw = plane_distance(V, W)
        if dvw >= 1.0 - 1e-6:
            continue
        x = rng.standard_normal(2) @ W.frame
        lhs = np.linalg.norm(x)
        rhs = np.linalg.norm(V.project(x)) / math.sqrt(1.0 - dvw * dvw)
        assert lhs <= rhs * (1.0 + 1e-9)


# ----------------------------------------------------------- isomorphisms

def test_isomorphism_identity():
    V = haar_sample(2, 3, stream(37, "iso-id"))
    assert plane_distance(apply_isomorphism(np.eye(3), V), V) < 1e-12


def test_isomorphism_distance_bound():
    rng = stream(41, "iso-bound")
    for _ in range(500):
        V, W = random_pair(2, 4, rng)
        u = np.eye(4) + 0.5 * rng.standard_normal((4, 4))
        rep = isomorphism_condition(u)
        if rep["condition"] > 1e6:
            continue
        lhs = plane_distance(apply_isomorphism(u, V), apply_isomorphism(u, W))
        rhs = rep["norm"] * rep["inverse_norm"] * plane_distance(V, W)
        assert lhs <= rhs * (1.0 + 1e-9)


def test_isomorphism_near_identity_bound():
    # ||u - id|| = 0.2 forces d(u(V), V) <= 0.2 / 0.8
    rng = stream(43, "iso-near-id")
    for _ in range(500):
        V = haar_sample(2, 4, rng)
        g = rng.standard_normal((4, 4))
        g *= 0.2 / operator_norm(g)
        u = np.eye(4) + g
        assert plane_distance(apply_isomorphism(u, V), V) <= 0.25 + 1e-9


def test_isomorphism_singular_raises():
    V = line2(0.0)
    u = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        apply_isomorphism(u, V)


# -------------------------------------------------------------- sampling

def test_haar_full_space_deterministic():
    rng = stream(47, "haar-full")
    V = haar_sample(3, 3, rng)
    assert np.array_equal(V.frame, np.eye(3))


def test_haar_rotation_invariance_ks():
    rng = stream(53, "haar-ks")
    V0 = haar_sample(1, 3, rng)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    samples = [haar_sample(1, 3, rng) for _ in range(10_000)]
    base = np.array([plane_distance(V, V0) for V in samples])
    rotated = np.array([plane_distance(LinearPlane(V.frame @ q.T), V0)
                        for V in samples])
    stat = ks_2samp(base, rotated).statistic
    assert stat < 0.05


def test_haar_line_angle_uniform_chi2():
    rng = stream(59, "haar-chi2")
    dirs = haar_lines(2, 10_000, rng)
    angles = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), math.pi)
    counts, _ = np.histogram(angles, bins=20, range=(0.0, math.pi))
    assert chisquare(counts).pvalue > 1e-3


def test_line_set_measure_trivial():
    rng = stream(61, "lines-all")
    est = line_set_measure(lambda L: True, 2, 200, rng)
    assert est.value == 1.0 and est.count == 200


def test_line_arc_measure():
    # two arcs of length pi/3 over a circle of length 2*pi: measure 1/3
    rng = stream(67, "lines-arc")
    axis = np.array([1.0, 0.0])
    pred = lambda L: abs(float(L.frame[0] @ axis)) >= math.cos(math.pi / 6)
    est = line_set_measure(pred, 2, 20_000, rng)
    oracle = sphere_cap_line_measure(axis, math.pi / 6)
    assert abs(oracle - 1.0 / 3.0) < 1e-12
    assert abs(est.value - oracle) <= 3.0 * est.std_error


def test_line_cap_measure():
    rng = stream(71, "lines-cap")
    axis = np.array([0.0, 0.0, 1.0])
    pred = lambda L: abs(float(L.frame[0] @ axis)) >= math.cos(math.pi / 3)
    est = line_set_measure(pred, 3, 20_000, rng)
    oracle = sphere_cap_line_measure(axis, math.pi / 3)
    assert abs(oracle - 0.5) < 1e-12
    assert abs(est.value - oracle) <= 3.0 * est.std_error


# --------------------------------------------------------- disintegration

def test_disintegration_trivial_predicate():
    rng = stream(73, "disint-all")
    out = disintegration_check(1, 1, 3, lambda P: True, 20, 20, rng)
    assert out["direct"].value == 1.0
    assert out["nested"].value == 1.0


def test_disintegration_cap_predicate():
    rng = stream(79, "disint-cap")
    e3 = np.array([0.0, 0.0, 1.0])

    def pred(P):
        # plane normal within pi/3 of e3
        normal = orthocomplement(P).frame[0]
        return abs(float(normal @ e3)) >= math.cos(math.pi / 3)

    out = disintegration_check(1, 1, 3, pred, 200, 50, rng,
                               direct_samples=10_000)
    assert abs(out["direct"].value - 0.5) <= 3.0 * out["direct"].std_error
    assert out["within_3_sigma"]


def test_disintegration_halfspace_p1_q2():
    rng = stream(83, "disint-half")
    w = rng.standard_normal(6)

    def pred(P):
        vec = P.projection()[np.triu_indices(4)][:6]
        return float(vec @ w) > 0.1

    out = disintegration_check(1, 2, 4, pred, 200, 50, rng,
                               direct_samples=10_000)
    assert out["gap"] <= 3.0 * out["sigma"]


# ------------------------------------------------------ hyperplane bound

def test_hyperplane_segment_bound():
    # H = {x1 = 1} in R^2, A = unit segment centered at the foot (1, 0):
    # bound = pi * 1.25 * (2 atan(1/2) / pi) = 2.5 atan(1/2) ~ 1.159
    H = AffinePlane(base=LinearPlane(np.array([[0.0, 1.0]])),
                    offset=np.array([1.0, 0.0]))
    A = sample_segment(np.array([1.0, -0.5]), np.array([1.0, 0.5]), 0.002)
    rng = stream(89, "hyper-seg")
    out = hyperplane_line_bound(H, A, 40_000, rng)
    oracle = 2.5 * math.atan(0.5)
    assert abs(out["measure_estimate"] - 1.0) < 0.02
    band = 3.0 * out["bound_std_error"] + 0.05
    assert abs(out["bound"] - oracle) <= band
    assert out["measure_estimate"] <= out["bound"] + band
    # meeting lines stay within sqrt(1 - (r0/r)^2) of the foot axis; a line
    # counts as meeting within meet_tol of a sample, which widens the extreme
    # angle by about meet_tol/r0
    assert out["max_line_distance"] <= out["line_distance_limit"] + 2 * A.delta
    assert abs(out["line_distance_limit"] - math.sqrt(0.2)) < 1e-3


def test_hyperplane_empty_set():
    from plateau.measure import empty_set
    H = AffinePlane(base=LinearPlane(np.array([[0.0, 1.0]])),
                    offset=np.array([1.0, 0.0]))
    out = hyperplane_line_bound(H, empty_set(1, 2, 0.01), 100,
                                stream(97, "hyper-empty"))
    assert out["measure_estimate"] == 0.0
    assert out["bound"] == 0.0


def test_hyperplane_through_origin_raises():
    H = AffinePlane(base=LinearPlane(np.array([[0.0, 1.0]])),
                    offset=np.array([0.0, 0.0]))
    A = sample_segment(np.array([0.0, -0.5]), np.array([0.0, 0.5]), 0.01)
    with pytest.raises(ValueError):
        hyperplane_line_bound(H, A, 10, stream(101, "hyper-origin"))


def test_hyperplane_disk_bound():
    # disk of radius 0.1 at the foot of {x3 = 1} in R^3
    from plateau.measure import SampledSet
    base = LinearPlane(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    H = AffinePlane(base=base, offset=np.array([0.0, 0.0, 1.0]))
    step = 0.004
    g = np.arange(-0.1, 0.1 + step / 2, step)
    xx, yy = np.meshgrid(g, g)
    keep = xx ** 2 + yy ** 2 <= 0.01
    pts = np.stack([xx[keep], yy[keep], np.ones(np.sum(keep))], axis=1)
    A = SampledSet(2, pts, np.full(len(pts), step ** 2), step)
    rng = stream(103, "hyper-disk")
    out = hyperplane_line_bound(H, A, 40_000, rng)
    band = 3.0 * out["bound_std_error"] + 0.002
    assert out["measure_estimate"] <= out["bound"] + band
    assert out["max_line_distance"] <= out["line_distance_limit"] + 2 * A.delta


# ------------------------------------------------------------- plumbing

def test_mc_estimate_unpacks():
    rng = stream(107, "mc-unpack")
    est, se, count = line_set_measure(lambda L: True, 2, 50, rng)
    assert est == 1.0 and count == 50 and se >= 0.0


def test_affine_plane_projection():
    base = LinearPlane(np.array([[1.0, 0.0]]))
    H = AffinePlane(base=base, offset=np.array([0.0, 2.0]))
    assert np.allclose(H.project(np.array([3.0, 7.0])), [3.0, 2.0])
    assert abs(H.distance(np.array([3.0, 7.0])) - 5.0) < 1e-12
