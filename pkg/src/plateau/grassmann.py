"""Planes through the origin: metric, graph coordinates, invariant measure.

The distance between d-planes is the operator norm of the difference of
orthogonal projectors.  Monte Carlo estimators all return
(estimate, standard error, sample count).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import null_space


class DistanceOne(ValueError):
    """Raised when a graph representation is requested for planes at
    distance 1, where the restricted projection is singular."""


@dataclass
class MCEstimate:
    value: float
    std_error: float
    count: int

    def __iter__(self):
        return iter((self.value, self.std_error, self.count))


@dataclass(frozen=True)
class LinearPlane:
    """d-plane through the origin of R^n given by an orthonormal row frame."""

    frame: np.ndarray  # (d, n), rows orthonormal

    def __post_init__(self):
        f = np.asarray(self.frame, dtype=float)
        if f.ndim != 2:
            raise ValueError("frame must be a (d, n) matrix")
        object.__setattr__(self, "frame", f)
        g = f @ f.T
        if not np.allclose(g, np.eye(len(f)), atol=1e-9):
            raise ValueError("frame rows are not orthonormal")

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    @property
    def n(self) -> int:
        return self.frame.shape[1]

    def projection(self) -> np.ndarray:
        return self.frame.T @ self.frame

    def project(self, x: np.ndarray) -> np.ndarray:
        """Orthogonal projection of points (N, n) onto the plane, in R^n."""
        x = np.asarray(x, dtype=float)
        return (x @ self.frame.T) @ self.frame

    def coords(self, x: np.ndarray) -> np.ndarray:
        """Frame coordinates (N, d) of the projections."""
        return np.asarray(x, dtype=float) @ self.frame.T

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(self.project(x) - x)) <= tol * max(
            1.0, float(np.linalg.norm(x)))


def plane_from_spanning(vectors: np.ndarray) -> LinearPlane:
    """Orthonormalize a spanning set (rows) into a plane."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    q, r = np.linalg.qr(v.T)
    rank = int(np.sum(np.abs(np.diag(r)) > 1e-12))
    if rank != v.shape[0]:
        raise ValueError("spanning set is degenerate")
    return LinearPlane(q[:, :rank].T)


def orthocomplement(V: LinearPlane) -> LinearPlane:
    """V^perp with a deterministic orthonormal frame."""
    if V.d == V.n:
        raise ValueError("full space has trivial complement")
    basis = null_space(V.frame)  # (n, n-d) orthonormal columns
    return LinearPlane(basis.T)


def plane_distance(V: LinearPlane, W: LinearPlane) -> float:
    """Operator norm of p_V - p_W; lies in [0, 1] for equal dimensions."""
    D = V.projection() - W.projection()
    ev = np.linalg.eigvalsh(D @ D)
    return float(math.sqrt(max(float(ev[-1]), 0.0)))


def plane_distance_restricted(V: LinearPlane, W: LinearPlane,
                              use_complement: bool = False) -> float:
    """max of the restricted norms ||p_V - p_W||_V, ||p_V - p_W||_W.

    With use_complement, the second restriction is taken on V^perp instead;
    both forms equal the unrestricted norm."""
    if V.d != W.d or V.n != W.n:
        raise ValueError("planes must share dimensions")
    D = V.projection() - W.projection()
    second = orthocomplement(V) if use_complement else W
    out = 0.0
    for P in (V, second):
        M = D @ P.frame.T  # restriction to the plane, mapping coords to R^n
        ev = np.linalg.eigvalsh(M.T @ M)
        out = max(out, math.sqrt(max(float(ev[-1]), 0.0)))
    return float(out)


@dataclass(frozen=True)
class GraphMap:
    """Linear map from V-coordinates to V^perp-coordinates whose graph is a
    d-plane transverse to V^perp."""

    base: LinearPlane
    matrix: np.ndarray  # (n-d, d)
    normal_frame: np.ndarray  # (n-d, n) frame of V^perp used for coordinates

    def norm(self) -> float:
        ev = np.linalg.eigvalsh(self.matrix.T @ self.matrix)
        return float(math.sqrt(max(float(ev[-1]), 0.0)))


def plane_to_graph(V: LinearPlane, W: LinearPlane) -> GraphMap:
    """Represent W as the graph over V of a linear map into V^perp.

    Requires the restriction of p_V to W to be invertible, i.e.
    plane_distance(V, W) < 1.
    """
    if V.d != W.d or V.n != W.n:
        raise ValueError("planes must share dimensions")
    if plane_distance(V, W) >= 1.0 - 1e-9:
        raise DistanceOne("planes at distance 1, projection onto V singular")
    U = orthocomplement(V)
    M = V.frame @ W.frame.T  # W-coords -> V-coords of the projection
    N = U.frame @ W.frame.T  # W-coords -> V^perp-coords
    phi = N @ np.linalg.inv(M)
    return GraphMap(base=V, matrix=phi, normal_frame=U.frame)


def graph_to_plane(g: GraphMap) -> LinearPlane:
    """The plane {x + phi(x) : x in V}."""
    rows = g.base.frame + g.matrix.T @ g.normal_frame
    return plane_from_spanning(rows)


def graph_norm_distance(g: GraphMap) -> float:
    """d(V, graph) = ||phi|| / sqrt(1 + ||phi||^2)."""
    c = g.norm()
    return c / math.sqrt(1.0 + c * c)


def isomorphism_condition(u: np.ndarray) -> dict:
    """Operator norm, inverse norm and condition number of a square map."""
    u = np.asarray(u, dtype=float)
    s = np.linalg.svd(u, compute_uv=False)
    smin = float(s[-1])
    return {
        "norm": float(s[0]),
        "inverse_norm": math.inf if smin == 0.0 else 1.0 / smin,
        "condition": math.inf if smin == 0.0 else float(s[0]) / smin,
    }


def apply_isomorphism(u: np.ndarray, V: LinearPlane) -> LinearPlane:
    """Image plane u(V); raises on singular u."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != u.shape[1] or u.shape[0] != V.n:
        raise ValueError("u must be a square matrix on the ambient space")
    cond = isomorphism_condition(u)
    if not math.isfinite(cond["condition"]) or cond["condition"] > 1e12:
        raise ValueError(f"u is singular (condition {cond['condition']:.3g})")
    return plane_from_spanning(V.frame @ u.T)


def operator_norm(a: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(np.asarray(a, float).T @ a)
    return float(math.sqrt(max(float(ev[-1]), 0.0)))


@dataclass(frozen=True)
class AffinePlane:
    base: LinearPlane
    offset: np.ndarray

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base.project(x - self.offset) + self.offset

    def distance(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(self.project(x) - x))


# ------------------------------------------------------------- sampling

def haar_sample(d: int, n: int, rng: np.random.Generator) -> LinearPlane:
    """Rotation-invariant random d-plane in R^n; d = n gives the full space
    with the identity frame, deterministically."""
    if not (1 <= d <= n):
        raise ValueError("need 1 <= d <= n")
    if d == n:
        return LinearPlane(np.eye(n))
    g = rng.standard_normal((n, d))
    q, _ = np.linalg.qr(g)
    return LinearPlane(q[:, :d].T)


def haar_lines(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, n) unit direction vectors of Haar-random lines."""
    g = rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def line_set_measure(predicate: Callable[[LinearPlane], bool], n: int,
                     samples: int, rng: np.random.Generator) -> MCEstimate:
    """Invariant measure of a set of lines in G(1, n) by Monte Carlo."""
    dirs = haar_lines(n, samples, rng)
    hits = 0
    for v in dirs:
        if predicate(LinearPlane(v[None, :])):
            hits += 1
    p = hits / samples
    se = math.sqrt(max(p * (1.0 - p), 1e-12 / samples) / samples)
    return MCEstimate(p, se, samples)


def plane_set_measure(predicate: Callable[[LinearPlane], bool], d: int, n: int,
                      samples: int, rng: np.random.Generator) -> MCEstimate:
    hits = 0
    for _ in range(samples):
        if predicate(haar_sample(d, n, rng)):
            hits += 1
    p = hits / samples
    se = math.sqrt(max(p * (1.0 - p), 1e-12 / samples) / samples)
    return MCEstimate(p, se, samples)


def disintegration_check(p: int, q: int, n: int,
                         predicate: Callable[[LinearPlane], bool],
                         outer_samples: int, inner_samples: int,
                         rng: np.random.Generator,
                         direct_samples: int | None = None
                         ) -> dict[str, MCEstimate]:
    """Compare the direct measure of a (p+q)-plane event with the nested
    average over V in G(p,n), W in G(q, V^perp) of the event on V + W."""
    if p + q > n:
        raise ValueError("p + q exceeds the ambient dimension")
    direct_samples = direct_samples or outer_samples * inner_samples
    direct = plane_set_measure(predicate, p + q, n, direct_samples, rng)

    outer_means = np.empty(outer_samples)
    for i in range(outer_samples):
        V = haar_sample(p, n, rng)
        U = orthocomplement(V)  # (n-p, n) frame
        hits = 0
        for _ in range(inner_samples):
            small = haar_sample(q, n - p, rng)  # plane in V^perp coordinates
            W_frame = small.frame @ U.frame
            VW = LinearPlane(np.vstack([V.frame, W_frame]))
            if predicate(VW):
                hits += 1
        outer_means[i] = hits / inner_samples
    nested_val = float(np.mean(outer_means))
    nested_se = float(np.std(outer_means, ddof=1) / math.sqrt(outer_samples))
    nested = MCEstimate(nested_val, nested_se, outer_samples * inner_samples)
    gap = abs(direct.value - nested.value)
    sigma = math.hypot(direct.std_error, nested.std_error)
    return {"direct": direct, "nested": nested,
            "gap": gap, "sigma": sigma, "within_3_sigma": gap <= 3.0 * sigma}


def sphere_cap_line_measure(axis: np.ndarray, angle: float) -> float:
    """Closed form: measure of lines within `angle` of a fixed line.

    Lines in G(1, n+1) correspond to antipodal pairs on S^n; the measure is
    the normalized area of the two caps of opening `angle`."""
    axis = np.asarray(axis, dtype=float)
    n = len(axis) - 1
    if n == 1:
        return 2.0 * angle / math.pi
    if n == 2:
        return 1.0 - math.cos(angle)  # two caps over area 4*pi
    raise NotImplementedError


def hyperplane_line_bound(H: AffinePlane, A, samples: int,
                          rng: np.random.Generator,
                          meet_tol: float | None = None) -> dict:
    """Compare the box-counting n-measure of a bounded set A inside an affine
    hyperplane H (not through the origin) with the upper bound
    (sigma_n / 2) (r^2 / r0)^n gamma(lines meeting A).

    A is a SampledSet living in H; a line "meets" A when it passes within
    meet_tol (default: the set's nominal spacing) of a sample.  Also reports
    the worst observed distance between a meeting line and the axis through
    the foot of H, against the ceiling sqrt(1 - (r0/r)^2)."""
    pts = np.asarray(A.points, dtype=float)
    count, ambient = pts.shape
    n = ambient - 1
    if H.base.d != n or H.base.n != ambient:
        raise ValueError("H must be a hyperplane of the ambient space")
    foot = H.project(np.zeros(ambient))
    r0 = float(np.linalg.norm(foot))
    if r0 <= 1e-12:
        raise ValueError("hyperplane passes through the origin")
    axis = foot / r0
    if meet_tol is None:
        meet_tol = A.delta
    sigma_n = _sphere_area(n)

    from .measure import hausdorff_estimate  # deferred, measure imports us
    lhs = hausdorff_estimate(A, 2.0 * A.delta) if count else 0.0

    if count == 0:
        zero = MCEstimate(0.0, 0.0, samples)
        return {"measure_estimate": 0.0, "line_measure": zero, "bound": 0.0,
                "bound_std_error": 0.0, "max_line_distance": 0.0,
                "line_distance_limit": 0.0, "radius": 0.0,
                "foot_distance": r0}

    r = float(np.max(np.linalg.norm(pts, axis=1)))
    dirs = haar_lines(ambient, samples, rng)
    # distance from a point to the line span(v): sqrt(|x|^2 - <x,v>^2)
    norms2 = np.sum(pts ** 2, axis=1)
    hits = np.zeros(samples, dtype=bool)
    max_axis_dist = 0.0
    for i, v in enumerate(dirs):
        proj = pts @ v
        d2 = np.maximum(norms2 - proj ** 2, 0.0)
        if np.any(d2 <= meet_tol ** 2):
            hits[i] = True
            c = abs(float(v @ axis))
            max_axis_dist = max(max_axis_dist, math.sqrt(max(1.0 - c * c, 0.0)))
    p = float(np.mean(hits))
    se = math.sqrt(max(p * (1 - p), 1e-12) / samples)
    scale = sigma_n / 2.0 * (r * r / r0) ** n
    limit = math.sqrt(max(1.0 - (r0 / r) ** 2, 0.0)) if r > 0 else 0.0
    return {
        "measure_estimate": float(lhs),
        "line_measure": MCEstimate(p, se, samples),
        "bound": scale * p,
        "bound_std_error": scale * se,
        "max_line_distance": max_axis_dist,
        "line_distance_limit": limit,
        "radius": r,
        "foot_distance": r0,
    }


def _sphere_area(n: int) -> float:
    """Area of the unit n-sphere S^n in R^(n+1)."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)
