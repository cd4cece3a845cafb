"""Extension operators for Lipschitz and uniformly continuous maps.

Everything is built on pointwise minima over finite sample sets: the
coordinatewise McShane formula and the infimal-convolution approximation of
a bounded uniformly continuous function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Function known on finitely many points, vector-valued."""

    domain_points: np.ndarray  # (N, m)
    values: np.ndarray  # (N, n)
    L: float | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.domain_points, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if len(vals) != len(pts):
            raise ValueError("one value per domain point required")
        object.__setattr__(self, "domain_points", pts)
        object.__setattr__(self, "values", vals)
        if self.L is not None:
            _validate_constant(pts, vals, self.L)

    @property
    def m(self) -> int:
        return self.domain_points.shape[1]

    @property
    def out_dim(self) -> int:
        return self.values.shape[1]


def _validate_constant(pts: np.ndarray, vals: np.ndarray, L: float) -> None:
    N = len(pts)
    if N <= 2000:
        dx = cdist(pts, pts)
        dv = cdist(vals, vals)
        mask = dx > 0
        if np.any(dv[mask] > L * dx[mask] * (1.0 + 1e-9)):
            raise ValueError("declared Lipschitz constant violated on samples")
        return
    rng = np.random.default_rng(0)
    i = rng.integers(0, N, size=1_000_000)
    j = rng.integers(0, N, size=1_000_000)
    keep = i != j
    dx = np.linalg.norm(pts[i[keep]] - pts[j[keep]], axis=1)
    dv = np.linalg.norm(vals[i[keep]] - vals[j[keep]], axis=1)
    good = dx > 0
    if np.any(dv[good] > L * dx[good] * (1.0 + 1e-9)):
        raise ValueError("declared Lipschitz constant violated on samples")


def mcshane_extend(f: SampledFunction, L: float,
                   x: np.ndarray) -> np.ndarray:
    """Coordinatewise g_j(x) = min over samples of f_j(y) + L|y - x|.

    Exact on the domain points; the vector-valued result is L*sqrt(out_dim)
    Lipschitz."""
    if len(f.domain_points) == 0:
        raise ValueError("empty domain")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    queries = np.atleast_2d(x)
    dist = cdist(queries, f.domain_points)  # (Q, N)
    g = np.min(f.values[None, :, :] + L * dist[:, :, None], axis=1)
    return g[0] if single else g


def lipschitz_approximate(f: Callable, M: float, delta: float,
                          grid: np.ndarray, x: np.ndarray) -> np.ndarray:
    """g(x) = min over the grid of f(y) + 2 M delta^-1 |x - y|.

    For |f| <= M with modulus omega, g <= f and f - g <= omega(delta); g is
    2 M / delta Lipschitz."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if len(grid) == 0:
        raise ValueError("empty grid")
    fvals = np.asarray([f(y) for y in grid], dtype=float)
    if fvals.ndim == 1:
        fvals = fvals[:, None]
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    queries = np.atleast_2d(x)
    dist = cdist(queries, grid)
    g = np.min(fvals[None, :, :] + (2.0 * M / delta) * dist[:, :, None],
               axis=1)
    return g[0] if single else g


def approx_extend(f: Callable, A_points: np.ndarray, grid: np.ndarray,
                  M: float, delta: float, eps: float,
                  x: np.ndarray) -> np.ndarray:
    """Lipschitz map equal to f on the A-samples and within eps of f on the
    grid: approximate f to eps/2, then McShane-extend the residual on A,
    truncated to [-eps/2, eps/2]."""
    A_points = np.atleast_2d(np.asarray(A_points, dtype=float))
    if len(A_points) == 0:
        raise ValueError("empty A")
    fA = np.asarray([f(a) for a in A_points], dtype=float)
    if fA.ndim == 1:
        fA = fA[:, None]
    gA = lipschitz_approximate(f, M, delta, grid, A_points)
    residual = fA - gA
    L_res = lipschitz_constant_estimate(A_points, residual)
    if L_res == 0.0:
        L_res = 2.0 * M / delta
    res_f = SampledFunction(A_points, residual)
    ext = mcshane_extend(res_f, L_res, x)
    ext = np.clip(ext, -eps / 2.0, eps / 2.0)
    return lipschitz_approximate(f, M, delta, grid, x) + ext


def lipschitz_constant_estimate(points: np.ndarray,
                                images: np.ndarray) -> float:
    """Max sampled ratio |f(x)-f(y)| / |x-y|: all pairs up to 2000 points,
    a million random pairs beyond; duplicate points are skipped."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    images = np.asarray(images, dtype=float)
    if images.ndim == 1:
        images = images[:, None]
    N = len(points)
    if N < 2:
        raise ValueError("need at least two points")
    if N <= 2000:
        dx = cdist(points, points)
        dv = cdist(images, images)
        iu = np.triu_indices(N, k=1)
        dx, dv = dx[iu], dv[iu]
    else:
        rng = np.random.default_rng(0)
        i = rng.integers(0, N, size=1_000_000)
        j = rng.integers(0, N, size=1_000_000)
        dx = np.linalg.norm(points[i] - points[j], axis=1)
        dv = np.linalg.norm(images[i] - images[j], axis=1)
    good = dx > 0
    if not np.any(good):
        return 0.0
    return float(np.max(dv[good] / dx[good]))
