"""Sampled d-sets and their measure estimators.

A SampledSet is a weighted point cloud standing in for a d-dimensional set.
Box-counting occupancy is the primary measure estimator; weight sums are the
calibrated secondary.  The gauge estimators average projected occupancy over
random planes.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .dyadic import EPS_GEOM, Cell, closed_mask
from .grassmann import LinearPlane, MCEstimate, haar_sample


@dataclass(frozen=True, eq=False)
class SampledSet:
    """Weighted samples of a d-dimensional set in R^n.

    weights carry units of length^d; delta is the nominal inter-sample
    spacing.  tangents, when present, give a d-plane per point.
    """

    d: int
    points: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,)
    delta: float
    tangents: tuple[LinearPlane, ...] | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            pts = pts.reshape(0, pts.shape[1] if pts.ndim == 2 and pts.shape[1] else 1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise ValueError("one weight per point required")
        if len(w) and (not np.all(np.isfinite(w)) or np.any(w <= 0)):
            raise ValueError("weights must be positive and finite")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.tangents is not None and len(self.tangents) != len(pts):
            raise ValueError("one tangent per point required")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    def restrict(self, mask: np.ndarray) -> "SampledSet":
        mask = np.asarray(mask, dtype=bool)
        tg = None
        if self.tangents is not None:
            tg = tuple(t for t, m in zip(self.tangents, mask) if m)
        return SampledSet(self.d, self.points[mask], self.weights[mask],
                          self.delta, tg)

    def translate(self, v: np.ndarray) -> "SampledSet":
        return SampledSet(self.d, self.points + np.asarray(v, dtype=float),
                          self.weights, self.delta, self.tangents)

    def with_points(self, new_points: np.ndarray) -> "SampledSet":
        return SampledSet(self.d, new_points, self.weights, self.delta, None)


def empty_set(d: int, n: int, delta: float = 1.0) -> SampledSet:
    return SampledSet(d, np.empty((0, n)), np.empty(0), delta)


def union(a: SampledSet, b: SampledSet) -> SampledSet:
    if a.d != b.d or a.n != b.n:
        raise ValueError("incompatible sets")
    return SampledSet(a.d, np.vstack([a.points, b.points]),
                      np.concatenate([a.weights, b.weights]),
                      min(a.delta, b.delta))


def save_csv(S: SampledSet, path: str) -> None:
    """Header x1,...,xn,weight; shortest-repr decimals round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i+1}" for i in range(S.n)] + ["weight"])
        for p, w in zip(S.points, S.weights):
            writer.writerow([repr(float(c)) for c in p] + [repr(float(w))])


def load_csv(path: str, d: int, delta: float) -> SampledSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("line 1: empty file") from None
        n = len(header) - 1
        if n < 1 or header != [f"x{i+1}" for i in range(n)] + ["weight"]:
            raise ValueError("line 1: expected header x1,...,xn,weight")
        pts, ws = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n + 1:
                raise ValueError(f"line {lineno}: expected {n + 1} fields, "
                                 f"got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric field") from None
            pts.append(vals[:n])
            ws.append(vals[n])
    if not pts:
        return empty_set(d, n, delta)
    return SampledSet(d, np.array(pts), np.array(ws), delta)


# ------------------------------------------------------- occupancy

@dataclass(frozen=True)
class OccupancyGrid:
    """delta-grid occupancy keys of a point cloud."""

    origin: tuple[float, ...]
    delta: float
    keys: frozenset

    @classmethod
    def of(cls, points: np.ndarray, delta: float,
           origin: np.ndarray | None = None) -> "OccupancyGrid":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if delta <= 0:
            raise ValueError("delta must be positive")
        n = points.shape[1]
        if origin is None:
            origin = np.zeros(n)
        idx = np.floor((points - origin) / delta).astype(np.int64)
        keys = frozenset(map(tuple, idx))
        return cls(tuple(float(c) for c in origin), delta, keys)

    def mass(self, d: int) -> float:
        return len(self.keys) * self.delta ** d


def occupancy_count(points: np.ndarray, delta: float) -> int:
    if len(points) == 0:
        return 0
    return len(OccupancyGrid.of(points, delta).keys)


def hausdorff_estimate(S: SampledSet, delta: float | None = None) -> float:
    """Box-counting mass: occupied delta-cells times delta^d."""
    if delta is None:
        delta = 2.0 * S.delta
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta < S.delta:
        warnings.warn("estimate below sample resolution is vacuous",
                      stacklevel=2)
    if len(S) == 0:
        return 0.0
    return occupancy_count(S.points, delta) * delta ** S.d


def weight_mass(S: SampledSet) -> float:
    return float(np.sum(S.weights))


def project_measure(S: SampledSet, V: LinearPlane,
                    delta: float | None = None) -> float:
    """Occupancy mass of the orthogonal projection onto V, in V-coordinates.

    Overlapping preimages collapse: this is where non-injectivity shows."""
    if V.d != S.d:
        raise ValueError("projection plane dimension must match the set")
    if delta is None:
        delta = 2.0 * S.delta
    if len(S) == 0:
        return 0.0
    coords = S.points @ V.frame.T
    return occupancy_count(coords, delta) * delta ** S.d


def zeta_gauge(S: SampledSet, n_planes: int, delta: float,
               rng: np.random.Generator) -> MCEstimate:
    """Average projected mass over Haar-random d-planes."""
    if len(S) == 0:
        return MCEstimate(0.0, 0.0, n_planes)
    vals = np.empty(n_planes)
    for i in range(n_planes):
        V = haar_sample(S.d, S.n, rng)
        vals[i] = project_measure(S, V, delta)
    se = float(np.std(vals, ddof=1) / math.sqrt(n_planes)) if n_planes > 1 else 0.0
    return MCEstimate(float(np.mean(vals)), se, n_planes)


def points_in_cell(S: SampledSet, A: Cell) -> np.ndarray:
    """Boolean mask of samples lying in the closed cell."""
    if len(S) == 0:
        return np.zeros(0, dtype=bool)
    return closed_mask(A, S.points)


def zeta_restricted(S: SampledSet, A: Cell, n_planes: int, delta: float,
                    rng: np.random.Generator) -> MCEstimate:
    """Gauge of S∩A averaged over d-planes of the affine hull of A.

    When dim(A) = d the average degenerates to the identity projection and
    the value is the plain box-counting mass of S∩A."""
    m = A.dim
    if m < S.d:
        raise ValueError("cell dimension below the set dimension")
    mask = points_in_cell(S, A)
    if not np.any(mask):
        return MCEstimate(0.0, 0.0, n_planes)
    spanned = [i for i in range(A.n) if A.spans(i)]
    lo, _ = A.bounds()
    local = S.points[np.ix_(mask, spanned)] - np.asarray(lo, float)[spanned]
    d = S.d
    if m == d:
        val = occupancy_count(local, delta) * delta ** d
        return MCEstimate(val, 0.0, n_planes)
    vals = np.empty(n_planes)
    for i in range(n_planes):
        V = haar_sample(d, m, rng)
        vals[i] = occupancy_count(local @ V.frame.T, delta) * delta ** d
    se = float(np.std(vals, ddof=1) / math.sqrt(n_planes)) if n_planes > 1 else 0.0
    return MCEstimate(float(np.mean(vals)), se, n_planes)


# ------------------------------------------------------- energies

@dataclass(frozen=True)
class Integrand:
    """Energy density, bounded between 1/lam and lam."""

    kind: str  # hausdorff | position | anisotropic
    lam: float = 1.0
    func: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("hausdorff", "position", "anisotropic"):
            raise ValueError(f"unknown integrand kind {self.kind!r}")
        if self.lam < 1.0:
            raise ValueError("lam must be >= 1")
        if self.kind != "hausdorff" and self.func is None:
            raise ValueError("this integrand kind needs a function")

    @classmethod
    def hausdorff(cls) -> "Integrand":
        return cls("hausdorff")

    @classmethod
    def position(cls, func: Callable, lam: float) -> "Integrand":
        return cls("position", lam, func)

    @classmethod
    def anisotropic(cls, func: Callable, lam: float) -> "Integrand":
        return cls("anisotropic", lam, func)

    def evaluate(self, x: np.ndarray, V: LinearPlane | None = None) -> float:
        if self.kind == "hausdorff":
            return 1.0
        if self.kind == "position":
            v = float(self.func(x))
        else:
            if V is None:
                raise ValueError("anisotropic integrand needs a tangent")
            v = float(self.func(x, V))
        if not (1.0 / self.lam - 1e-12 <= v <= self.lam + 1e-12):
            raise ValueError(f"integrand value {v} outside [1/lam, lam]")
        return v


@dataclass(frozen=True)
class QuasiminParams:
    kappa: float = 1.0
    h: float = 0.0
    scale: float = math.inf

    def __post_init__(self):
        if self.kappa < 1.0:
            raise ValueError("kappa must be >= 1")
        if self.h < 0.0:
            raise ValueError("h must be >= 0")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")


def estimate_tangents(points: np.ndarray, d: int,
                      pca_k: int = 12) -> tuple[LinearPlane, ...]:
    """Local PCA tangents: top-d directions of the pca_k nearest neighbors."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    N, n = points.shape
    if N < d + 1:
        raise ValueError("not enough points to estimate tangents")
    k = min(pca_k, N - 1)
    tree = cKDTree(points)
    _, nb = tree.query(points, k=k + 1)
    out = []
    for i in range(N):
        cloud = points[nb[i]]
        cloud = cloud - cloud.mean(axis=0)
        _, sv, vt = np.linalg.svd(cloud, full_matrices=False)
        if len(sv) > d and sv[d - 1] > 0 and sv[d] / sv[d - 1] > 0.9:
            warnings.warn("degenerate local spectrum in tangent estimation",
                          stacklevel=2)
        out.append(LinearPlane(vt[:d]))
    return tuple(out)


def energy_eval(S: SampledSet, I: Integrand, pca_k: int = 12) -> float:
    """Sum of w_i * i(x_i, T_i); Hausdorff kind reduces to the weight mass."""
    if I.kind == "hausdorff":
        return weight_mass(S)
    if len(S) == 0:
        return 0.0
    if I.kind == "position":
        vals = np.array([I.evaluate(x) for x in S.points])
        return float(np.sum(S.weights * vals))
    tangents = S.tangents
    if tangents is None:
        tangents = estimate_tangents(S.points, S.d, pca_k)
    vals = np.array([I.evaluate(x, T) for x, T in zip(S.points, tangents)])
    return float(np.sum(S.weights * vals))


# ------------------------------------------------------- audits

def ahlfors_audit(S: SampledSet, centers: np.ndarray,
                  radii: Sequence[float]) -> dict:
    """Ratios mass(S∩B(x,r)) / r^d over the given centers and radii.

    Ball masses come from the calibrated weights: box-counting in balls has
    an orientation bias (up to sqrt(n) on tilted lines) that would swamp the
    regularity constants this audit is after."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    rows = []
    for c in centers:
        dist = np.linalg.norm(S.points - c, axis=1) if len(S) else np.empty(0)
        for r in radii:
            if r <= 0:
                raise ValueError("radii must be positive")
            mass = float(np.sum(S.weights[dist <= r]))
            rows.append({"center": tuple(float(v) for v in c), "r": float(r),
                         "mass": mass, "ratio": mass / r ** S.d})
    ratios = [row["ratio"] for row in rows]
    return {"rows": rows,
            "min_ratio": min(ratios) if ratios else math.nan,
            "max_ratio": max(ratios) if ratios else math.nan}


def moved_mask(points: np.ndarray, images: np.ndarray,
               eps: float = EPS_GEOM) -> np.ndarray:
    return np.linalg.norm(np.asarray(images, float) -
                          np.asarray(points, float), axis=1) > eps


def _occupancy_energy(points: np.ndarray, d: int, delta: float,
                      I: Integrand, pca_k: int = 12) -> float:
    """Occupancy-backed energy: occupied cells get delta^d times the mean
    integrand value of their points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        return 0.0
    if I.kind == "hausdorff":
        return occupancy_count(points, delta) * delta ** d
    idx = np.floor(points / delta).astype(np.int64)
    cells: dict = {}
    if I.kind == "anisotropic":
        tangents = estimate_tangents(points, d, pca_k)
        vals = [I.evaluate(x, T) for x, T in zip(points, tangents)]
    else:
        vals = [I.evaluate(x) for x in points]
    for key, v in zip(map(tuple, idx), vals):
        cells.setdefault(key, []).append(v)
    return float(sum(np.mean(vs) for vs in cells.values()) * delta ** d)


def quasimin_audit(S: SampledSet, f_images: np.ndarray,
                   B: tuple[np.ndarray, float], P: QuasiminParams,
                   I: Integrand, tol: float = 0.1,
                   delta: float | None = None) -> dict:
    """Check I(S∩W_f) <= kappa I(f(S∩W_f)) + h I(S ∩ hB) on occupancy-backed
    energies, W_f being the moved set.  hB is the audit ball scaled by h
    about its center."""
    center, radius = np.asarray(B[0], dtype=float), float(B[1])
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    if P.scale < math.inf and radius > P.scale:
        raise ValueError("ball exceeds the quasiminimality scale")
    f_images = np.atleast_2d(np.asarray(f_images, dtype=float))
    if f_images.shape != S.points.shape:
        raise ValueError("one image per sample required")
    if delta is None:
        delta = 2.0 * S.delta
    moved = moved_mask(S.points, f_images)
    ball = np.linalg.norm(S.points - center, axis=1) <= radius
    if np.any(moved & ~ball):
        raise ValueError("deformation moves points outside the ball")
    lhs = _occupancy_energy(S.points[moved], S.d, delta, I)
    rhs = P.kappa * _occupancy_energy(f_images[moved], S.d, delta, I)
    if P.h > 0:
        small = np.linalg.norm(S.points - center, axis=1) <= P.h * radius
        rhs += P.h * _occupancy_energy(S.points[small], S.d, delta, I)
    return {"lhs": lhs, "rhs": rhs, "moved_count": int(np.sum(moved)),
            "satisfied": lhs <= rhs * (1.0 + tol) + 1e-12}


# ------------------------------------------------------- generators

def sample_segment(p: np.ndarray, q: np.ndarray,
                   spacing: float) -> SampledSet:
    """Uniform samples of a segment, weights calibrated to its length."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    length = float(np.linalg.norm(q - p))
    if length == 0.0:
        return SampledSet(1, p[None, :], np.array([spacing]), spacing)
    count = max(2, int(math.ceil(length / spacing)) + 1)
    t = np.linspace(0.0, 1.0, count)
    pts = p[None, :] + t[:, None] * (q - p)[None, :]
    w = np.full(count, length / count)
    return SampledSet(1, pts, w, length / (count - 1))


def sample_polyline(vertices: np.ndarray, spacing: float,
                    closed: bool = False) -> SampledSet:
    """Chain of segments; duplicate joints removed, each part's weights sum
    to its own length."""
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    if closed:
        vertices = np.vstack([vertices, vertices[:1]])
    pts_parts, w_parts, deltas = [], [], []
    last = len(vertices) - 2
    for i in range(len(vertices) - 1):
        s = sample_segment(vertices[i], vertices[i + 1], spacing)
        keep_last = (i == last) and not closed
        pts = s.points if keep_last else s.points[:-1]
        total = float(np.sum(s.weights))
        w_parts.append(np.full(len(pts), total / len(pts)))
        pts_parts.append(pts)
        deltas.append(s.delta)
    return SampledSet(1, np.vstack(pts_parts), np.concatenate(w_parts),
                      min(deltas))


def sample_square_boundary(lo: float, hi: float, spacing: float) -> SampledSet:
    corners = np.array([[lo, lo], [hi, lo], [hi, hi], [lo, hi]])
    return sample_polyline(corners, spacing, closed=True)


def sample_circle(center: np.ndarray, r: float, spacing: float) -> SampledSet:
    center = np.asarray(center, dtype=float)
    count = max(8, int(math.ceil(2.0 * math.pi * r / spacing)))
    th = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)
    pts = center[None, :] + r * np.stack([np.cos(th), np.sin(th)], axis=1)
    w = np.full(count, 2.0 * math.pi * r / count)
    return SampledSet(1, pts, w, 2.0 * math.pi * r / count)


def cantor_four_corner(depth: int) -> SampledSet:
    """Centers of the 4^m squares of the four-corner Cantor set at depth m,
    weight 4^(-m) each (unit total mass), contraction ratio 1/4."""
    if not (0 <= depth <= 8):
        raise ValueError("depth must lie in 0..8")
    anchors = np.zeros((1, 2))
    offsets = np.array([[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]])
    scale = 1.0
    for _ in range(depth):
        scale /= 4.0
        anchors = (anchors[:, None, :] + offsets[None, :, :] * (4.0 * scale)
                   ).reshape(-1, 2)
    side = scale
    pts = anchors + side / 2.0
    w = np.full(len(pts), 4.0 ** (-depth))
    return SampledSet(1, pts, w, side)
