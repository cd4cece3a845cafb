"""Cubical complexes built from dyadic cells: charts, pasting, validation.

A complex is a finite collection of cells with pairwise disjoint relative
interiors whose interior-neighborhoods V_A cover a neighborhood of every
cell.  Chart systems relax disjointness to nested-or-disjoint; pasting
extracts the maximal cells of a system, which is again a complex.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .dyadic import (
    EPS_GEOM,
    Cell,
    DomainOracle,
    DyadicScalar,
    Membership,
    cell_contains_cell,
    cell_membership,
    dist_to_cell,
    dist_to_cell_boundary,
    dyadic_power,
    interior_contained,
    interior_mask,
    interiors_intersect,
    point_in_interior,
)


class AxiomViolation(Exception):
    def __init__(self, axiom: str, witness=None, message: str = ""):
        self.axiom = axiom
        self.witness = witness
        super().__init__(message or f"axiom ({axiom}) violated: {witness}")


SIZE_CAP = 500_000


def _sort_key(c: Cell):
    return (c.scale_exp, c.span,
            tuple((a.mantissa, a.exponent) for a in c.anchor))


def _floor_to_level(x: DyadicScalar, level: int) -> DyadicScalar:
    """Largest multiple of 2**-level that is <= x (level may be negative)."""
    shift = x.exponent - level
    if shift <= 0:
        return x  # exponent <= level means x already sits on the lattice
    q = x.mantissa >> shift  # arithmetic shift floors for both signs
    if level >= 0:
        return DyadicScalar(q, level)
    return DyadicScalar(q << (-level), 0)


def _on_level_lattice(x: DyadicScalar, level: int) -> bool:
    """x is an integer multiple of 2**-level."""
    if x.exponent <= level:
        return True
    if level >= 0:
        return False  # canonical mantissa is odd when exponent > 0
    if x.exponent > 0:
        return False
    return x.mantissa % (1 << (-level)) == 0


def _containing_face(cell: Cell, level: int) -> Cell | None:
    """The unique level-`level` lattice face whose interior meets int(cell).

    Valid for lattice-aligned cells with sidelength <= 2**-level; the
    returned face always contains int(cell).  None when a spanned interval
    of cell straddles the coarser lattice (cannot happen if aligned).
    """
    anchor = []
    span = 0
    h = dyadic_power(cell.scale_exp)
    for i in range(cell.n):
        a = cell.anchor[i]
        if cell.spans(i):
            c = _floor_to_level(a, level)
            if not (cell.hi(i) <= c + dyadic_power(level)):
                return None
            anchor.append(c)
            span |= 1 << i
        else:
            if _on_level_lattice(a, level):
                anchor.append(a)
            else:
                anchor.append(_floor_to_level(a, level))
                span |= 1 << i
    return Cell(tuple(anchor), span, level)


class Complex:
    """Finite cubical complex over R^n with query indexes."""

    def __init__(self, cells: Iterable[Cell], meta: dict | None = None):
        cells = sorted(set(cells), key=_sort_key)
        if not cells:
            raise ValueError("empty complex")
        self.cells: tuple[Cell, ...] = tuple(cells)
        self.n = cells[0].n
        if any(c.n != self.n for c in cells):
            raise ValueError("mixed ambient dimensions")
        self.meta = dict(meta or {})
        # indexes: points by anchor; dim>=1 cells by (aligned, level)
        self._points: dict[tuple, Cell] = {}
        self._levels: dict[int, set[Cell]] = {}
        self._unaligned: list[Cell] = []
        for c in cells:
            if c.span == 0:
                self._points[self._pt_key(c)] = c
            elif c.lattice_aligned():
                self._levels.setdefault(c.scale_exp, set()).add(c)
            else:
                self._unaligned.append(c)
        self._los = np.array([c.bounds()[0] for c in cells])
        self._his = np.array([c.bounds()[1] for c in cells])
        self._super: dict[Cell, tuple[Cell, ...]] = {}
        if self._points:
            self._point_cells = list(self._points.values())
            self._point_coords = np.array(
                [c.bounds()[0] for c in self._point_cells])
        else:
            self._point_cells = []
            self._point_coords = np.empty((0, self.n))

    @staticmethod
    def _pt_key(c: Cell):
        return tuple((a.mantissa, a.exponent) for a in c.anchor)

    def __len__(self):
        return len(self.cells)

    def __contains__(self, cell: Cell):
        if cell.span == 0:
            return self._pt_key(cell) in self._points
        if cell.lattice_aligned():
            return cell in self._levels.get(cell.scale_exp, ())
        return cell in self._unaligned

    def dims(self) -> list[int]:
        return sorted({c.dim for c in self.cells})

    def cells_of_dim(self, d: int) -> list[Cell]:
        return [c for c in self.cells if c.dim == d]

    def levels(self) -> list[int]:
        return sorted(self._levels)

    def support_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self._los.min(axis=0), self._his.max(axis=0)

    def _bbox_candidates(self, lo: np.ndarray, hi: np.ndarray,
                         pad: float = 1e-12) -> list[Cell]:
        mask = np.all(self._los <= hi + pad, axis=1) & \
            np.all(self._his >= lo - pad, axis=1)
        return [self.cells[i] for i in np.nonzero(mask)[0]]

    def cells_containing(self, cell: Cell) -> tuple[Cell, ...]:
        """All B in K with cell a subset of B (closed containment)."""
        hit = self._super.get(cell)
        if hit is not None:
            return hit
        lo, hi = cell.bounds()
        out = tuple(B for B in self._bbox_candidates(lo, hi)
                    if cell_contains_cell(cell, B))
        self._super[cell] = out
        return out

    def minimal_cell_at(self, x, eps: float = EPS_GEOM) -> Cell | None:
        """The unique cell whose relative interior contains x, if any."""
        x = np.asarray(x, dtype=float)
        for level in self._levels:
            cand = self._snap_interior_candidate(x, level, eps)
            if cand is not None and cand in self._levels[level]:
                return cand
        key_cell = self._snap_point(x, eps)
        if key_cell is not None:
            return key_cell
        for c in self._unaligned:
            if point_in_interior(c, x, eps):
                return c
        return None

    def _snap_point(self, x, eps: float) -> Cell | None:
        if not self._point_cells:
            return None
        gaps = np.max(np.abs(self._point_coords - x), axis=1)
        i = int(np.argmin(gaps))
        return self._point_cells[i] if gaps[i] <= eps else None

    def _snap_interior_candidate(self, x, level: int, eps: float) -> Cell | None:
        """Lattice face at `level` whose interior would contain x."""
        h = 2.0 ** (-level)
        anchor = []
        span = 0
        for i in range(len(x)):
            t = x[i] / h
            r = round(t)
            if abs(t - r) * h <= eps:
                anchor.append(DyadicScalar(int(r), 0).scaled(level))
            else:
                f = math.floor(t)
                anchor.append(DyadicScalar(int(f), 0).scaled(level))
                span |= 1 << i
        if span == 0:
            return None  # handled by the points index
        return Cell(tuple(anchor), span, level)

    def support_contains(self, x, eps: float = EPS_GEOM) -> bool:
        """x in |K| (union of closed cells)."""
        x = np.asarray(x, dtype=float)
        for level, bucket in self._levels.items():
            for cand in self._closed_candidates(x, level, eps):
                if cand in bucket:
                    return True
        if self._snap_point(x, eps) is not None:
            return True
        for c in self._unaligned:
            if cell_membership(c, x, eps) is not Membership.OUTSIDE:
                return True
        return False

    def _closed_candidates(self, x, level: int, eps: float):
        h = 2.0 ** (-level)
        per_coord: list[list[tuple[DyadicScalar, int]]] = []
        for i in range(len(x)):
            t = x[i] / h
            r = round(t)
            opts = []
            if abs(t - r) * h <= eps:
                v = DyadicScalar(int(r), 0).scaled(level)
                opts.append((v, 0))
                opts.append((v, 1))
                opts.append((v - dyadic_power(level), 1))
            else:
                opts.append((DyadicScalar(math.floor(t), 0).scaled(level), 1))
            per_coord.append(opts)
        for combo in itertools.product(*per_coord):
            anchor = tuple(v for v, _ in combo)
            span = 0
            for i, (_, s) in enumerate(combo):
                span |= s << i
            if span:
                yield Cell(anchor, span, level)

    def to_json(self) -> dict:
        return {
            "kind": "complex",
            "schema": 1,
            "n": self.n,
            "cells": [cell_to_json(c) for c in self.cells],
        }

    @staticmethod
    def from_json(obj: dict) -> "Complex":
        if obj.get("kind") != "complex":
            raise ValueError("not a complex document")
        return Complex([cell_from_json(c) for c in obj["cells"]])


def cell_to_json(c: Cell) -> dict:
    e = max(a.exponent for a in c.anchor)
    nums = [a.mantissa << (e - a.exponent) for a in c.anchor]
    return {"anchor_num": nums, "anchor_exp": e,
            "span_mask": c.span, "scale_exp": c.scale_exp}


def cell_from_json(obj: dict) -> Cell:
    e = int(obj["anchor_exp"])
    anchor = tuple(DyadicScalar(int(m), e) for m in obj["anchor_num"])
    return Cell(anchor, int(obj["span_mask"]), int(obj["scale_exp"]))


def save_complex(K: Complex, path) -> None:
    with open(path, "w") as f:
        json.dump(K.to_json(), f)


def load_complex(path) -> Complex:
    with open(path) as f:
        return Complex.from_json(json.load(f))


# ---------------------------------------------------------------- charts

def canonical_chart(n: int) -> Complex:
    """The 3^n cells prod([0, a_i]) over a in {-1,0,1}^n."""
    return dyadic_chart((0,) * n, 0)


def dyadic_chart(p: Sequence, k: int, _check_lattice: bool = True) -> Complex:
    """Chart at center p with sidelength 2**-k; p must sit on the lattice."""
    anchor0 = [DyadicScalar.coerce(v) for v in p]
    h = dyadic_power(k)
    if _check_lattice:
        for a in anchor0:
            if not _on_level_lattice(a, k):
                raise ValueError(f"chart center {a} not on the 2^-{k} lattice")
    cells = []
    n = len(anchor0)
    for alpha in itertools.product((-1, 0, 1), repeat=n):
        anchor = tuple(anchor0[i] - h if alpha[i] == -1 else anchor0[i]
                       for i in range(n))
        span = sum(1 << i for i in range(n) if alpha[i] != 0)
        cells.append(Cell(anchor, span, k))
    return Complex(cells, meta={"chart_center": [a.to_float() for a in anchor0],
                                "chart_scale_exp": k})


def chart_support(chart: Complex) -> tuple[np.ndarray, np.ndarray]:
    return chart.support_bounds()


def translate_complex(K: Complex, vec: Sequence) -> Complex:
    v = [DyadicScalar.coerce(t) for t in vec]
    return Complex([Cell(tuple(c.anchor[i] + v[i] for i in range(c.n)),
                         c.span, c.scale_exp) for c in K.cells], meta=K.meta)


def grid_complex(lo: Sequence, hi: Sequence, k: int,
                 include_boundary: bool = True) -> Complex:
    """All lattice faces of the 2**-k grid inside the box [lo, hi]."""
    lo_d = [DyadicScalar.coerce(v) for v in lo]
    hi_d = [DyadicScalar.coerce(v) for v in hi]
    n = len(lo_d)
    h = dyadic_power(k)
    counts = []
    for i in range(n):
        w = (hi_d[i] - lo_d[i]).as_fraction() / h.as_fraction()
        if w.denominator != 1 or w <= 0:
            raise ValueError("box walls must be multiples of the grid step")
        if not _on_level_lattice(lo_d[i], k):
            raise ValueError("box corner must sit on the grid lattice")
        counts.append(int(w))
    cells = []
    for span_bits in itertools.product((0, 1), repeat=n):
        span = sum(b << i for i, b in enumerate(span_bits))
        ranges = [range(counts[i] + (0 if span_bits[i] else 1)) for i in range(n)]
        for idx in itertools.product(*ranges):
            anchor = tuple(lo_d[i] + DyadicScalar(idx[i], 0) * h for i in range(n))
            c = Cell(anchor, span, k)
            if not include_boundary and _on_box_boundary(c, lo_d, hi_d):
                continue
            cells.append(c)
    return Complex(cells, meta={"grid_level": k,
                                "box": [[v.to_float() for v in lo_d],
                                        [v.to_float() for v in hi_d]]})


def _on_box_boundary(c: Cell, lo_d, hi_d) -> bool:
    for i in range(c.n):
        if not c.spans(i):
            a = c.anchor[i]
            if a._cmp(lo_d[i]) == 0 or a._cmp(hi_d[i]) == 0:
                return True
    return False


# ---------------------------------------------------------- validation

@dataclass
class ValidationReport:
    ok: bool
    n_cells: int
    violations: list = field(default_factory=list)
    max_containment: int = 0

    def __bool__(self):
        return self.ok


def validate_complex(K: Complex, probe_directions: int = 8,
                     rng: np.random.Generator | None = None) -> ValidationReport:
    """Check disjoint interiors, the 3^n containment bound, and that each
    V_A is a relative neighborhood of int(A) (sampled probe check)."""
    violations = []

    # (i) pairwise disjoint relative interiors, exact
    levels = sorted(K._levels)
    for k in levels:
        for A in K._levels[k]:
            for l in levels:
                if l >= k:
                    break
                B = _containing_face(A, l)
                if B is not None and B != A and B in K._levels[l]:
                    violations.append(("i", A, B))
    for P in K._points.values():
        for l in levels:
            F = _containing_face(P, l)
            if F is not None and F.span != 0 and F in K._levels[l]:
                violations.append(("i", P, F))
        for c in K._unaligned:
            if _is_exact_inside(c, P):
                violations.append(("i", P, c))
    for A in K._unaligned:
        lo, hi = A.bounds()
        for B in K._bbox_candidates(lo, hi):
            if B == A:
                continue
            if interiors_intersect(A, B):
                violations.append(("i", A, B))

    # containment bound: no cell inside more than 3^n cells
    max_cont = 0
    bound = 3 ** K.n
    for A in K.cells:
        m = len(K.cells_containing(A))
        max_cont = max(max_cont, m)
        if m > bound:
            violations.append(("containment", A, m))

    # (iii) V_A neighborhoods, sampled
    rng = rng or np.random.default_rng(0)
    rho = 0.25 * min((c.sidelength for c in K.cells if c.span), default=1.0)
    dirs = _probe_directions(K.n, probe_directions, rng)
    for A in K.cells:
        if not _check_va_neighborhood(K, A, rho, dirs):
            violations.append(("iii", A, None))

    return ValidationReport(ok=not violations, n_cells=len(K),
                            violations=violations, max_containment=max_cont)


def _is_exact_inside(c: Cell, P: Cell) -> bool:
    return cell_membership(c, list(P.anchor), 0.0) is Membership.INTERIOR


def _interior_samples(A: Cell, rng: np.random.Generator) -> np.ndarray:
    lo, hi = A.bounds()
    c = 0.5 * (lo + hi)
    out = [c]
    if A.dim == 0:
        return np.array(out)
    span_idx = [i for i in range(A.n) if A.spans(i)]
    h = A.sidelength
    u = c.copy()
    for i in span_idx:
        u[i] = lo[i] + h * (0.05 + 0.9 * rng.random())
    out.append(u)
    # points close to the relative boundary of int(A)
    for i in span_idx:
        for side in (lo[i] + 0.02 * h, hi[i] - 0.02 * h):
            u = c.copy()
            u[i] = side
            out.append(u)
    return np.array(out)


def _probe_directions(n: int, n_random: int, rng: np.random.Generator) -> np.ndarray:
    dirs = []
    eye = np.eye(n)
    for i in range(n):
        dirs.append(eye[i])
        dirs.append(-eye[i])
    for combo in itertools.product((-1.0, 1.0), repeat=n):
        dirs.append(np.array(combo) / math.sqrt(n))
    for _ in range(n_random):
        v = rng.standard_normal(n)
        dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


def _check_va_neighborhood(K: Complex, A: Cell, rho: float,
                           dirs: np.ndarray) -> bool:
    """Sampled check that V_A is a relative neighborhood of int(A).

    The probe radius shrinks with the distance to the relative boundary of
    A; a probe inside |K| but outside every interior of a super-cell of A
    is a witness against axiom (iii).
    """
    sup = K.cells_containing(A)
    rng = np.random.default_rng(abs(hash(A)) % (2 ** 32))
    samples = _interior_samples(A, rng)
    for x in samples:
        if A.dim == 0:
            r = rho
        else:
            r = min(rho, 0.5 * dist_to_cell_boundary(A, x))
        if r <= 0:
            continue
        probes = x[None, :] + np.concatenate([r * dirs, 0.25 * r * dirs])
        ok = np.zeros(len(probes), dtype=bool)
        for B in sup:
            ok |= interior_mask(B, probes)
        for idx in np.nonzero(~ok)[0]:
            if K.support_contains(probes[idx]):
                return False
    return True


# -------------------------------------------------- V_A neighborhoods

@dataclass
class VANeighborhood:
    cell: Cell
    super_cells: tuple[Cell, ...]

    def contains(self, x, eps: float = EPS_GEOM) -> bool:
        return any(point_in_interior(B, x, eps) for B in self.super_cells)


def neighborhood_VA(K: Complex, A: Cell) -> VANeighborhood:
    if A not in K:
        raise ValueError("cell not in complex")
    return VANeighborhood(cell=A, super_cells=K.cells_containing(A))


def in_cone_VA_kappa(A: Cell, kappa: float, x) -> bool:
    """d(x, A) < kappa^-1 * d(x, boundary A); requires dim(A) >= 1."""
    if A.dim < 1:
        raise ValueError("cone criterion needs dim(A) >= 1")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return dist_to_cell(A, x) < dist_to_cell_boundary(A, x) / kappa


def kappa_for_dim(d: int) -> float:
    return 1.0 + math.sqrt(d)


# -------------------------------------------------------- relations

def is_subcomplex(L: Complex, K: Complex) -> bool:
    """L subset of K, closed upward: A in L, B in K, A subset B => B in L."""
    for A in L.cells:
        if A not in K:
            return False
    for A in L.cells:
        for B in K.cells_containing(A):
            if B not in L:
                return False
    return True


def is_subordinate(L: Complex, K: Complex) -> bool:
    """Every cell interior of L sits inside a cell interior of K."""
    for A in L.cells:
        lo, hi = A.bounds()
        if not any(interior_contained(A, B) for B in K._bbox_candidates(lo, hi)):
            return False
    return True


def rigid_open_set_contains(K: Complex, x, eps: float = EPS_GEOM) -> bool:
    """x in U(K), the union of cell interiors."""
    return K.minimal_cell_at(x, eps) is not None


# ----------------------------------------------------------- pasting

@dataclass
class ChartSystem:
    charts: list[Complex]

    def all_cells(self) -> set[Cell]:
        out: set[Cell] = set()
        for ch in self.charts:
            out.update(ch.cells)
        return out


def paste_system(system: ChartSystem | Sequence[Complex],
                 size_cap: int = SIZE_CAP) -> Complex:
    """Maximal cells of a nested-or-disjoint system of charts."""
    if not isinstance(system, ChartSystem):
        system = ChartSystem(list(system))
    cells = system.all_cells()
    if len(cells) > size_cap:
        raise AxiomViolation("ii", len(cells),
                             f"system too large: {len(cells)} > {size_cap}")
    levels: dict[int, set[Cell]] = {}
    points: dict[tuple, Cell] = {}
    unaligned: list[Cell] = []
    for c in cells:
        if c.span == 0:
            points[Complex._pt_key(c)] = c
        elif c.lattice_aligned():
            levels.setdefault(c.scale_exp, set()).add(c)
        else:
            unaligned.append(c)

    # nested-or-disjoint holds automatically for lattice faces; only pairs
    # involving an unaligned cell can violate it
    if unaligned:
        all_list = list(cells)
        for A in unaligned:
            for B in all_list:
                if A == B:
                    continue
                if interiors_intersect(A, B) and not (
                        interior_contained(A, B) or interior_contained(B, A)):
                    raise AxiomViolation("i", (A, B))

    lvl_sorted = sorted(levels)

    def dominated(A: Cell) -> bool:
        if A.span == 0:
            lo, _ = A.bounds()
            for l in lvl_sorted:
                F = _containing_face(A, l)
                if F is not None and F != A and F.span != 0 and F in levels[l]:
                    return True
            for B in unaligned:
                if _is_exact_inside(B, A):
                    return True
            return False
        if A.lattice_aligned():
            for l in lvl_sorted:
                if l >= A.scale_exp:
                    break
                B = _containing_face(A, l)
                if B is not None and B != A and B in levels[l]:
                    return True
            for B in unaligned:
                if B != A and interior_contained(A, B):
                    return True
            return False
        for B in cells:
            if B != A and interior_contained(A, B):
                return True
        return False

    maximal = [c for c in cells if not dominated(c)]
    return Complex(maximal, meta={"pasted_from": len(system.charts)})


# ----------------------------------------------------------- whitney

def whitney_decompose(domain: DomainOracle, k_max: int,
                      k_min: int = 0) -> Complex:
    """Maximal cells of all charts with closed support inside the domain.

    Charts at level k sit at lattice centers p in 2**-k Z^n with
    p + [-2**-k, 2**-k]^n inside X (and inside the truncation box).  The
    depth cap k_max leaves an uncovered margin of width about 2**-k_max
    near the boundary; points x with min(1, d_inf(x, X^c)) >= 2**(-k_max+2)
    are always covered.
    """
    if domain.bounding_box is None:
        raise ValueError("whitney decomposition needs a bounding box")
    lo_box, hi_box = domain.bounding_box
    n = len(lo_box)
    admissible: dict[int, set[tuple[int, ...]]] = {}
    for k in range(k_min, k_max + 1):
        h = 2.0 ** (-k)
        idx_lo = [math.ceil((lo_box[i] + h) / h) for i in range(n)]
        idx_hi = [math.floor((hi_box[i] - h) / h) for i in range(n)]
        if any(idx_lo[i] > idx_hi[i] for i in range(n)):
            continue
        level_set = set()
        for idx in itertools.product(*[range(idx_lo[i], idx_hi[i] + 1)
                                       for i in range(n)]):
            p = np.array(idx, dtype=float) * h
            if domain.box_fits(p - h, p + h):
                level_set.add(idx)
        if level_set:
            admissible[k] = level_set

    if not admissible:
        raise ValueError("no chart fits the domain at the allowed depths")

    def cell_in_system(c: Cell, k: int) -> bool:
        adm = admissible.get(k)
        if adm is None:
            return False
        for v in c.vertices():
            idx = _lattice_index(v, k)
            if idx is not None and idx in adm:
                return True
        return False

    per_level_cells: dict[int, set[Cell]] = {}
    for k, adm in admissible.items():
        bucket = set()
        h = dyadic_power(k)
        for idx in adm:
            center = tuple(DyadicScalar(j, 0) * h for j in idx)
            for alpha in itertools.product((-1, 0, 1), repeat=n):
                anchor = tuple(center[i] - h if alpha[i] == -1 else center[i]
                               for i in range(n))
                span = sum(1 << i for i in range(n) if alpha[i] != 0)
                bucket.add(Cell(anchor, span, k))
        per_level_cells[k] = bucket

    lvls = sorted(per_level_cells)
    maximal: set[Cell] = set()
    for k in lvls:
        for c in per_level_cells[k]:
            dominated = False
            for l in lvls:
                if c.span != 0 and l >= k:
                    break  # same/finer lattice faces never strictly contain c
                B = _containing_face(c, l)
                if B is not None and B != c and cell_in_system(B, l):
                    dominated = True
                    break
            if not dominated:
                maximal.add(c)

    return Complex(maximal, meta={
        "whitney_k_max": k_max,
        "coverage_margin": 2.0 ** (-k_max + 2),
        "levels": lvls,
    })


def _lattice_index(v: tuple[DyadicScalar, ...], k: int) -> tuple[int, ...] | None:
    idx = []
    for a in v:
        if a.exponent > k:
            return None
        idx.append(a.mantissa << (k - a.exponent))
    return tuple(idx)


# ---------------------------------------------------------- skeleton

def skeleton(K: Complex, d: int) -> tuple[Complex, list[Cell]]:
    """(closed d-skeleton as a complex, list of exactly-d-dimensional cells)."""
    low = [c for c in K.cells if c.dim <= d]
    if not low:
        raise ValueError(f"no cells of dimension <= {d}")
    return Complex(low, meta={"skeleton_of": len(K), "d": d}), \
        [c for c in K.cells if c.dim == d]
