"""Radial cell projections with averaged center selection.

The skeleton-flattening map is a composition of per-cell radial pushes,
swept one dimension at a time from the ambient dimension down to the
target dimension.  Centers are drawn from the concentric half cell and
accepted when the pushed samples keep their box-counting and gauge
masses under a configured factor; a guard ball around the accepted
center caps the stretch so the per-cell map stays Lipschitz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .complexes import Complex, cell_to_json
from .dyadic import (
    EPS_GEOM,
    Cell,
    closed_mask,
    dist_to_cell_boundary,
    dyadic_power,
    interior_mask,
)
from .lipschitz import lipschitz_constant_estimate
from .measure import SampledSet, occupancy_count, zeta_restricted

LAMBDA_DEFAULT = 20.0
C_DIST_DEFAULT = 0.125
MAX_TRIES_DEFAULT = 64


class CenterExhausted(RuntimeError):
    """All center draws failed: the set is dense in the cell at its own
    sampling resolution, so no admissible projection center exists."""

    def __init__(self, cell: Cell, tries: int):
        self.cell = cell
        self.tries = tries
        super().__init__(f"no admissible center in {cell} after {tries} draws")


def _span_axes(A: Cell) -> list[int]:
    return [i for i in range(A.n) if A.spans(i)]


def boundary_faces(A: Cell) -> list[Cell]:
    """The 2*dim codimension-one faces of the cell."""
    h = dyadic_power(A.scale_exp)
    out = []
    for i in _span_axes(A):
        sub = A.span & ~(1 << i)
        out.append(Cell(A.anchor, sub, A.scale_exp))
        shifted = tuple(A.anchor[j] + h if j == i else A.anchor[j]
                        for j in range(A.n))
        out.append(Cell(shifted, sub, A.scale_exp))
    return out


def _half_cell_draw(A: Cell, rng: np.random.Generator) -> np.ndarray:
    lo, hi = A.bounds()
    x = 0.5 * (lo + hi)
    s = A.sidelength
    for i in _span_axes(A):
        x[i] += (rng.random() - 0.5) * 0.5 * s
    return x


def _occ_mass(points: np.ndarray, delta: float, d: int) -> float:
    if len(points) == 0:
        return 0.0
    return occupancy_count(points, delta) * delta ** d


def _radial_apply(A: Cell, x: np.ndarray, delta: float,
                  pts: np.ndarray) -> np.ndarray:
    """Push points of the closed cell onto its boundary along rays from x.

    Points closer to x than delta move with the ray parameter scaled by
    |y - x| / delta, which caps the stretch near the center.  Boundary
    landings are snapped exactly onto the binding walls.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lo, hi = A.bounds()
    span = _span_axes(A)
    N = len(pts)
    u = pts - x
    r = np.linalg.norm(u[:, span], axis=1)
    T = np.full((N, len(span)), np.inf)
    for j, i in enumerate(span):
        ui = u[:, i]
        pos, neg = ui > 0, ui < 0
        T[pos, j] = (hi[i] - x[i]) / ui[pos]
        T[neg, j] = (lo[i] - x[i]) / ui[neg]
    t_exit = T.min(axis=1) if span else np.full(N, np.inf)
    degenerate = ~np.isfinite(t_exit)
    t_exit = np.where(degenerate, 1.0, t_exit)
    pure = ~degenerate if delta <= 0 else (~degenerate) & (r >= delta)
    inner = t_exit * r / delta if delta > 0 else np.zeros(N)
    t = np.where(pure, np.maximum(t_exit, 1.0), inner)
    t[degenerate] = 0.0
    out = x[None, :] + t[:, None] * u
    bind = pure[:, None] & (T <= (t_exit * (1.0 + 1e-12))[:, None])
    for j, i in enumerate(span):
        ui = u[:, i]
        out[bind[:, j] & (ui > 0), i] = hi[i]
        out[bind[:, j] & (ui < 0), i] = lo[i]
        np.clip(out[:, i], lo[i], hi[i], out=out[:, i])
    for i in range(A.n):
        if not A.spans(i):
            out[:, i] = lo[i]
    return out


def radial_project(A: Cell, x, y, delta: float = 0.0) -> np.ndarray:
    """Radial projection of y onto the cell boundary, centered at x.

    With delta > 0 points inside the guard ball B(x, delta) are pushed by
    the clamped ray parameter instead and stay inside the cell."""
    if A.dim < 1:
        raise ValueError("0-cells have no boundary to project onto")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not closed_mask(A, y[None, :])[0]:
        raise ValueError("point to project lies outside the cell")
    if not interior_mask(A, x[None, :])[0]:
        raise ValueError("center must lie in the relative interior")
    span = _span_axes(A)
    if delta <= 0.0 and float(np.linalg.norm((y - x)[span])) == 0.0:
        raise ValueError("ray from the center through itself is undefined")
    return _radial_apply(A, x, delta, y[None, :])[0]


@dataclass(frozen=True, eq=False)
class RadialProjection:
    """A projection center inside the concentric half cell with its guard
    radius; the guard keeps the closed ball inside the cell interior."""

    cell: Cell
    center: np.ndarray
    delta: float

    def __post_init__(self):
        if self.cell.dim < 1:
            raise ValueError("projection cells need dimension >= 1")
        x = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", x)
        lo, hi = self.cell.bounds()
        mid = 0.5 * (lo + hi)
        quarter = 0.25 * self.cell.sidelength
        for i in range(self.cell.n):
            if self.cell.spans(i):
                if abs(x[i] - mid[i]) > quarter + EPS_GEOM:
                    raise ValueError("center outside the half cell")
            elif abs(x[i] - lo[i]) > EPS_GEOM:
                raise ValueError("center off the cell's affine hull")
        wall = dist_to_cell_boundary(self.cell, x)
        if not (0.0 < self.delta < wall):
            raise ValueError("guard radius must fit inside the interior")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return _radial_apply(self.cell, self.center, self.delta, pts)

    def to_json(self) -> dict:
        return {"cell": cell_to_json(self.cell),
                "center": [float(v) for v in self.center],
                "delta": float(self.delta)}


def average_projection_check(Q: Cell, S: SampledSet, n_centers: int,
                             rng: np.random.Generator | None = None,
                             delta: float | None = None) -> dict:
    """Monte Carlo audit of the pushed mass averaged over half-cell centers.

    Returns the mean image/source mass ratio over admissible centers, the
    same average normalized as diam(Q)^-dim times the half-cell integral,
    and ratio quantiles.  A center is admissible when its occupancy box is
    free of samples."""
    if Q.dim < 1:
        raise ValueError("projection needs dim(Q) >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    if delta is None:
        delta = 2.0 * S.delta
    in_q = closed_mask(Q, S.points) if len(S) else np.zeros(0, dtype=bool)
    if not in_q.any():
        raise ValueError("the set does not meet the cell")
    pts = S.points[in_q]
    occupied = {tuple(k) for k in
                np.floor(pts / S.delta).astype(np.int64)}
    src_mass = _occ_mass(pts, delta, S.d)
    ratios = []
    for _ in range(n_centers):
        x = _half_cell_draw(Q, rng)
        if tuple(np.floor(x / S.delta).astype(np.int64)) in occupied:
            continue
        clearance = float(np.min(np.linalg.norm(pts - x, axis=1)))
        if clearance <= 0.0:
            continue
        wall = dist_to_cell_boundary(Q, x)
        rp = RadialProjection(Q, x, 0.5 * min(clearance, wall))
        ratios.append(_occ_mass(rp.apply(pts), delta, S.d) / src_mass)
    if not ratios:
        raise ValueError("no admissible centers: the set is dense in the "
                         "half cell at sample resolution")
    arr = np.array(ratios)
    avg = float(np.mean(arr))
    vol_half = (0.5 * Q.sidelength) ** Q.dim
    return {
        "avg_ratio": avg,
        "normalized_integral": avg * vol_half / Q.diameter() ** Q.dim,
        "quantiles": {f"q{int(100 * p)}": float(np.quantile(arr, p))
                      for p in (0.1, 0.25, 0.5, 0.75, 0.9)},
        "n_admissible": len(ratios),
        "ratios": [float(v) for v in ratios],
    }


def select_center(A: Cell, F: SampledSet, parents,
                  lam: float = LAMBDA_DEFAULT,
                  c_dist: float = C_DIST_DEFAULT,
                  max_tries: int = MAX_TRIES_DEFAULT,
                  rng: np.random.Generator | None = None,
                  n_planes: int = 16,
                  delta: float | None = None) -> RadialProjection:
    """Draw a projection center for the cell that the current set tolerates.

    Accepted centers clear the samples in A by c_dist * diam(A), keep the
    per-parent box-counting mass of the pushed set within lam, and keep
    the gauge mass landing on each boundary face within lam of the source
    gauge.  The guard radius is half the smaller of the sample clearance
    and the wall distance."""
    if A.dim < 1:
        raise ValueError("projection centers need dim(A) >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    if delta is None:
        delta = 2.0 * F.delta
    pts = F.points
    empty = len(pts) == 0
    in_closed = closed_mask(A, pts) if not empty else np.zeros(0, dtype=bool)
    in_int = interior_mask(A, pts) if not empty else np.zeros(0, dtype=bool)
    anchored = pts[in_closed]
    idx_int = np.nonzero(in_int)[0]
    diam = A.diameter()

    parent_data = []
    faces = []
    src_gauge = 0.0
    if len(idx_int):
        for B in parents:
            mask_b = closed_mask(B, pts)
            if not mask_b.any():
                continue
            idx_b = np.nonzero(mask_b)[0]
            parent_data.append((idx_b, occupancy_count(pts[idx_b], delta)))
        src_gauge = zeta_restricted(F.restrict(in_int), A,
                                    n_planes, delta, rng).value
        faces = [G for G in boundary_faces(A) if G.dim >= F.d]

    for _ in range(max_tries):
        x = _half_cell_draw(A, rng)
        clearance = math.inf
        if len(anchored):
            clearance = float(np.min(np.linalg.norm(anchored - x, axis=1)))
        if clearance < c_dist * diam:
            continue
        wall = dist_to_cell_boundary(A, x)
        rp = RadialProjection(A, x, 0.5 * min(clearance, wall))
        if not len(idx_int):
            return rp
        img_all = pts.copy()
        img_all[idx_int] = rp.apply(pts[idx_int])
        ok = True
        for idx_b, src_occ in parent_data:
            if occupancy_count(img_all[idx_b], delta) > lam * src_occ + 1e-12:
                ok = False
                break
        if ok and src_gauge > 0.0:
            img_set = SampledSet(F.d, img_all[idx_int], F.weights[idx_int],
                                 F.delta)
            for G in faces:
                val = zeta_restricted(img_set, G, n_planes, delta, rng).value
                if val > lam * src_gauge + 1e-12:
                    ok = False
                    break
        if ok:
            return rp
    raise CenterExhausted(A, max_tries)


def ff_sweep(K: Complex, m: int, F: SampledSet, centers) -> SampledSet:
    """One projection stage: push every sample sitting in the interior of
    an m-cell onto that cell's boundary; everything else is untouched."""
    centers = dict(centers)
    moves = []
    for A in K.cells:
        if A.dim != m:
            continue
        mask = interior_mask(A, F.points) if len(F) else np.zeros(0, bool)
        if not mask.any():
            continue
        rp = centers.get(A)
        if rp is None:
            raise ValueError(f"occupied cell {A} has no projection center")
        if rp.cell != A:
            raise ValueError("projection center bound to a different cell")
        moves.append((rp, mask))
    pts = F.points.copy()
    for rp, mask in moves:
        pts[mask] = rp.apply(F.points[mask])
    return F.with_points(pts)


@dataclass
class FFPlan:
    """Chosen centers for every stage, top dimension first."""

    complex: Complex
    d: int
    sweeps: list  # [(m, [(Cell, RadialProjection), ...]), ...]

    def validate(self) -> "FFPlan":
        for m, entries in self.sweeps:
            if not (self.d < m <= self.complex.n):
                raise ValueError(f"stage dimension {m} out of range")
            for A, rp in entries:
                if A.dim != m:
                    raise ValueError("sweep cell of the wrong dimension")
                if rp.cell != A:
                    raise ValueError("center bound to a different cell")
        return self


@dataclass
class FFResult:
    mapped: SampledSet
    plan: FFPlan
    diagnostics: dict
    checks: dict

    def to_json(self) -> dict:
        return self.diagnostics


def _classify(K: Complex, pts: np.ndarray) -> list[Cell | None]:
    return [K.minimal_cell_at(p) for p in pts]


def ff_project(K: Complex, d: int, E: SampledSet,
               lam: float = LAMBDA_DEFAULT,
               rng: np.random.Generator | None = None,
               c_dist: float = C_DIST_DEFAULT,
               max_tries: int = MAX_TRIES_DEFAULT,
               n_planes: int = 16,
               delta: float | None = None,
               max_fill: float = 0.3,
               lam_prime: float | None = None) -> FFResult:
    """Flatten the sampled set onto the d-skeleton of the complex.

    Sweeps dimensions n down to d+1 with per-cell centers from
    select_center.  The result carries the plan, per-stage diagnostics
    and the checked postconditions: exact per-cell containment of every
    trajectory, fixed points below the target dimension, skeleton
    landing, per-cell mass ratios within lam^(n-d), and per-d-cell
    occupancy within lam_prime of the neighborhood gauge."""
    n = K.n
    if not (0 <= d < n):
        raise ValueError("target dimension must satisfy 0 <= d < n")
    if E.d != d:
        raise ValueError("set dimension must match the target dimension")
    if E.n != n:
        raise ValueError("ambient dimensions differ")
    rng = rng if rng is not None else np.random.default_rng(0)
    if delta is None:
        delta = 2.0 * E.delta
    if lam_prime is None:
        lam_prime = lam ** (n - d)
    diag_rng = np.random.default_rng(int(rng.integers(2 ** 63)))

    start_cells = _classify(K, E.points)
    for i, M in enumerate(start_cells):
        if M is None:
            raise ValueError(f"sample {i} lies outside the complex")
    start_dims = np.array([M.dim for M in start_cells], dtype=int)

    lo_sup, hi_sup = K.support_bounds()
    diam_k = float(np.linalg.norm(hi_sup - lo_sup))
    if len(E):
        fill = (occupancy_count(E.points, delta) * delta ** (d + 1)
                / diam_k ** (d + 1))
        if fill > max_fill:
            raise ValueError(
                f"occupancy at dimension {d + 1} fills {fill:.3f} of the "
                f"support (cap {max_fill}); the set is too dense to flatten")

    cur = E
    traj = [E.points]
    sweeps = []
    stages_diag = []
    stage_max = []
    descent = []
    for m in range(n, d, -1):
        occupied = []
        for A in K.cells:
            if A.dim != m:
                continue
            mask = interior_mask(A, cur.points) if len(cur) else None
            if mask is not None and mask.any():
                occupied.append((A, mask))
        entries = []
        for A, _ in occupied:
            cell_rng = np.random.default_rng(int(rng.integers(2 ** 63)))
            rp = select_center(A, cur, K.cells_containing(A), lam=lam,
                               c_dist=c_dist, max_tries=max_tries,
                               rng=cell_rng, n_planes=n_planes, delta=delta)
            entries.append((A, rp))
        nxt = ff_sweep(K, m, cur, entries)
        cell_diags = []
        ratios = [1.0]
        for (A, mask), (_, rp) in zip(occupied, entries):
            in_a = closed_mask(A, cur.points)
            src_occ = occupancy_count(cur.points[in_a], delta)
            img_occ = occupancy_count(nxt.points[in_a], delta)
            ratio_h = img_occ / src_occ
            src_gauge = zeta_restricted(cur.restrict(mask), A,
                                        n_planes, delta, diag_rng).value
            img_set = SampledSet(d, nxt.points[mask], cur.weights[mask],
                                 cur.delta)
            ratio_z = 0.0
            for G in boundary_faces(A):
                if G.dim < d or src_gauge <= 0.0:
                    continue
                val = zeta_restricted(img_set, G, n_planes, delta,
                                      diag_rng).value
                ratio_z = max(ratio_z, val / src_gauge)
            lip = 0.0
            if int(mask.sum()) >= 2:
                lip = lipschitz_constant_estimate(cur.points[mask],
                                                  nxt.points[mask])
            ratios.append(ratio_h)
            cell_diags.append({"cell": cell_to_json(A),
                               "center": [float(v) for v in rp.center],
                               "delta": float(rp.delta),
                               "ratio_H": float(ratio_h),
                               "ratio_zeta": float(ratio_z),
                               "lip_est": float(lip)})
        sweeps.append((m, entries))
        stages_diag.append({"m": m, "cells": cell_diags})
        stage_max.append(float(max(ratios)))
        cur = nxt
        traj.append(cur.points)
        dims_now = [M.dim if M is not None else n + 1
                    for M in _classify(K, cur.points)]
        descent.append(bool(all(dim < m for dim in dims_now)))

    final = cur
    plan = FFPlan(K, d, sweeps).validate()

    containment_viol = 0
    by_cell: dict[Cell, list[int]] = {}
    for i, M in enumerate(start_cells):
        by_cell.setdefault(M, []).append(i)
    for M, idx in by_cell.items():
        lo, hi = M.bounds()
        for pts_t in traj:
            sub = pts_t[idx]
            for j in range(n):
                col = sub[:, j]
                if M.spans(j):
                    bad = (col < lo[j]) | (col > hi[j])
                else:
                    bad = np.abs(col - lo[j]) > EPS_GEOM
                containment_viol += int(np.count_nonzero(bad))

    low = start_dims <= d
    fixed_ok = bool(np.array_equal(final.points[low], E.points[low]))

    final_cells = _classify(K, final.points)
    landing: dict[str, int] = {}
    landing_ok = True
    for i, M in enumerate(final_cells):
        dim = M.dim if M is not None else -1
        landing[str(dim)] = landing.get(str(dim), 0) + 1
        if M is None or (dim > d and not low[i]):
            landing_ok = False

    ratio_bound = lam ** (n - d) * 1.1
    max_cell_ratio = 0.0
    for A in K.cells:
        mask = closed_mask(A, E.points) if len(E) else np.zeros(0, bool)
        if not mask.any():
            continue
        src = occupancy_count(E.points[mask], delta)
        img = occupancy_count(final.points[mask], delta)
        max_cell_ratio = max(max_cell_ratio, img / src)
    ratio_ok = max_cell_ratio <= ratio_bound + 1e-9

    gauge_worst = 0.0
    gauge_ok = True
    for A in K.cells_of_dim(d):
        mask_img = interior_mask(A, final.points) if len(final) else None
        if mask_img is None or not mask_img.any():
            continue
        lhs = _occ_mass(final.points[mask_img], delta, d)
        rhs = 0.0
        for B in K.cells_containing(A):
            mask_b = interior_mask(B, E.points)
            if not mask_b.any():
                continue
            rhs += zeta_restricted(E.restrict(mask_b), B,
                                   n_planes, delta, diag_rng).value
        excess = lhs / (lam_prime * rhs) if rhs > 0 else math.inf
        gauge_worst = max(gauge_worst, excess)
        if excess > 1.1:
            gauge_ok = False

    product = float(np.prod(stage_max)) if stage_max else 1.0
    ledger_ok = product <= ratio_bound + 1e-9

    checks = {
        "containment": {"ok": containment_viol == 0,
                        "violations": containment_viol},
        "low_dim_fixed": {"ok": fixed_ok, "count": int(np.sum(low))},
        "skeleton_landing": {"ok": landing_ok, "by_dim": landing},
        "cell_ratio": {"ok": bool(ratio_ok),
                       "max_ratio": float(max_cell_ratio),
                       "bound": float(ratio_bound)},
        "dcell_gauge": {"ok": bool(gauge_ok),
                        "worst_excess": float(gauge_worst),
                        "lam_prime": float(lam_prime)},
        "monotone_descent": {"ok": bool(all(descent)), "per_stage": descent},
        "ratio_ledger": {"ok": bool(ledger_ok), "product": product,
                         "bound": float(ratio_bound),
                         "stage_max": stage_max},
    }
    diagnostics = {"stages": stages_diag, "checks": checks}
    return FFResult(mapped=final, plan=plan, diagnostics=diagnostics,
                    checks=checks)


def prune_low_mass_dcells(K: Complex, d: int, F: SampledSet,
                          threshold_fraction: float,
                          rng: np.random.Generator | None = None,
                          delta: float | None = None) -> SampledSet:
    """Empty the d-cells whose occupancy mass falls below a fraction of
    the half-cell measure by pushing their samples onto the cell walls."""
    if d < 1:
        raise ValueError("pruning needs d >= 1")
    if threshold_fraction < 0.0:
        raise ValueError("threshold fraction must be non-negative")
    rng = rng if rng is not None else np.random.default_rng(0)
    if delta is None:
        delta = 2.0 * F.delta
    pts = F.points.copy()
    for A in K.cells:
        if A.dim != d:
            continue
        mask = interior_mask(A, pts) if len(pts) else np.zeros(0, bool)
        if not mask.any():
            continue
        occ = _occ_mass(pts[mask], delta, d)
        if occ >= threshold_fraction * (0.5 * A.sidelength) ** d:
            continue
        sub = pts[mask]
        for _ in range(MAX_TRIES_DEFAULT):
            x = _half_cell_draw(A, rng)
            clearance = float(np.min(np.linalg.norm(sub - x, axis=1)))
            if clearance > 0.0:
                break
        else:
            raise CenterExhausted(A, MAX_TRIES_DEFAULT)
        wall = dist_to_cell_boundary(A, x)
        rp = RadialProjection(A, x, 0.5 * min(clearance, wall))
        pts[mask] = rp.apply(sub)
    return F.with_points(pts)
