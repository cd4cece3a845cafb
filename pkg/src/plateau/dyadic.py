"""Exact dyadic scalars, axis-aligned dyadic cells and domain oracles.

A cell is a product of coordinate factors that are either a single dyadic
point or a closed interval of sidelength 2**-scale_exp.  All wall
comparisons are exact integer arithmetic; floats only enter through
tolerance-based point queries.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

EPS_GEOM = 1e-9


class Membership(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class DyadicScalar:
    """mantissa / 2**exponent with exponent >= 0, reduced at construction."""

    mantissa: int
    exponent: int

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError("exponent must be non-negative")
        m, e = self.mantissa, self.exponent
        while m != 0 and m % 2 == 0 and e > 0:
            m //= 2
            e -= 1
        if m == 0:
            e = 0
        object.__setattr__(self, "mantissa", m)
        object.__setattr__(self, "exponent", e)

    @staticmethod
    def from_float(x: float) -> "DyadicScalar":
        if not math.isfinite(x):
            raise ValueError(f"not a finite value: {x}")
        num, den = float(x).as_integer_ratio()
        if den == 1:
            return DyadicScalar(num, 0)
        return DyadicScalar(num, den.bit_length() - 1)

    @staticmethod
    def coerce(x) -> "DyadicScalar":
        if isinstance(x, DyadicScalar):
            return x
        if isinstance(x, (int, np.integer)):
            return DyadicScalar(int(x), 0)
        if isinstance(x, Fraction):
            den = x.denominator
            if den & (den - 1):
                raise ValueError(f"{x} is not dyadic")
            return DyadicScalar(x.numerator, den.bit_length() - 1)
        return DyadicScalar.from_float(float(x))

    def as_fraction(self) -> Fraction:
        return Fraction(self.mantissa, 1 << self.exponent)

    def to_float(self) -> float:
        return self.mantissa / (1 << self.exponent)

    def _pair(self, other: "DyadicScalar") -> tuple[int, int]:
        e = max(self.exponent, other.exponent)
        return (self.mantissa << (e - self.exponent),
                other.mantissa << (e - other.exponent))

    def __add__(self, other) -> "DyadicScalar":
        other = DyadicScalar.coerce(other)
        a, b = self._pair(other)
        return DyadicScalar(a + b, max(self.exponent, other.exponent))

    def __sub__(self, other) -> "DyadicScalar":
        other = DyadicScalar.coerce(other)
        a, b = self._pair(other)
        return DyadicScalar(a - b, max(self.exponent, other.exponent))

    def __neg__(self) -> "DyadicScalar":
        return DyadicScalar(-self.mantissa, self.exponent)

    def __mul__(self, other) -> "DyadicScalar":
        other = DyadicScalar.coerce(other)
        return DyadicScalar(self.mantissa * other.mantissa,
                            self.exponent + other.exponent)

    def scaled(self, k: int) -> "DyadicScalar":
        """self * 2**-k (k may be negative)."""
        if k >= 0:
            return DyadicScalar(self.mantissa, self.exponent + k)
        return DyadicScalar(self.mantissa << (-k), self.exponent)

    def _cmp(self, other) -> int:
        other = DyadicScalar.coerce(other)
        a, b = self._pair(other)
        return (a > b) - (a < b)

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __repr__(self):
        return f"DyadicScalar({self.mantissa}, {self.exponent})"


def dyadic_power(k: int) -> DyadicScalar:
    """2**-k as an exact scalar (k may be negative)."""
    if k >= 0:
        return DyadicScalar(1, k)
    return DyadicScalar(1 << (-k), 0)


@dataclass(frozen=True)
class Cell:
    """Product of [p_i, p_i + 2**-scale_exp] over span bits, {p_i} elsewhere."""

    anchor: tuple[DyadicScalar, ...]
    span: int
    scale_exp: int

    def __post_init__(self):
        if self.span < 0 or self.span >> len(self.anchor):
            raise ValueError("span mask out of range")
        if self.span == 0:
            # scale is immaterial for a point; normalize so equality is geometric
            object.__setattr__(self, "scale_exp", 0)

    @staticmethod
    def make(anchor: Sequence, span: int, scale_exp: int) -> "Cell":
        return Cell(tuple(DyadicScalar.coerce(a) for a in anchor), span, scale_exp)

    @property
    def n(self) -> int:
        return len(self.anchor)

    @property
    def dim(self) -> int:
        return self.span.bit_count()

    @property
    def sidelength(self) -> float:
        return 2.0 ** (-self.scale_exp)

    def spans(self, i: int) -> bool:
        return bool((self.span >> i) & 1)

    def hi(self, i: int) -> DyadicScalar:
        if self.spans(i):
            return self.anchor[i] + dyadic_power(self.scale_exp)
        return self.anchor[i]

    def lo(self, i: int) -> DyadicScalar:
        return self.anchor[i]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([a.to_float() for a in self.anchor])
        hi = lo.copy()
        h = self.sidelength
        for i in range(self.n):
            if self.spans(i):
                hi[i] += h
        return lo, hi

    def center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return 0.5 * (lo + hi)

    def diameter(self) -> float:
        return self.sidelength * math.sqrt(self.dim)

    def lattice_aligned(self) -> bool:
        """True when every anchor coordinate is a multiple of the sidelength."""
        return all(a.exponent <= self.scale_exp for a in self.anchor)

    def vertices(self) -> list[tuple[DyadicScalar, ...]]:
        out = [self.anchor]
        h = dyadic_power(self.scale_exp)
        for i in range(self.n):
            if self.spans(i):
                out = out + [tuple(v[j] + h if j == i else v[j] for j in range(self.n))
                             for v in out]
        return out

    def __repr__(self):
        lo, hi = self.bounds()
        parts = []
        for i in range(self.n):
            if self.spans(i):
                parts.append(f"[{lo[i]:g},{hi[i]:g}]")
            else:
                parts.append(f"{{{lo[i]:g}}}")
        return "Cell(" + "x".join(parts) + ")"


def cell_dim(cell: Cell) -> int:
    return cell.dim


def cell_contains_cell(inner: Cell, outer: Cell) -> bool:
    """inner subset of outer as closed sets, exact."""
    if inner.n != outer.n:
        raise ValueError("ambient dimensions differ")
    for i in range(inner.n):
        if not (outer.lo(i) <= inner.lo(i) and inner.hi(i) <= outer.hi(i)):
            return False
    return True


def interiors_intersect(a: Cell, b: Cell) -> bool:
    """Open-face interiors meet (relative interiors), exact."""
    for i in range(a.n):
        asp, bsp = a.spans(i), b.spans(i)
        if asp and bsp:
            lo = a.lo(i) if a.lo(i) >= b.lo(i) else b.lo(i)
            hi = a.hi(i) if a.hi(i) <= b.hi(i) else b.hi(i)
            if not (lo < hi):
                return False
        elif asp and not bsp:
            if not (a.lo(i) < b.lo(i) < a.hi(i)):
                return False
        elif bsp and not asp:
            if not (b.lo(i) < a.lo(i) < b.hi(i)):
                return False
        else:
            if a.lo(i)._cmp(b.lo(i)) != 0:
                return False
    return True


def interior_contained(inner: Cell, outer: Cell) -> bool:
    """int(inner) subset of int(outer), exact."""
    for i in range(inner.n):
        isp, osp = inner.spans(i), outer.spans(i)
        if isp:
            if not osp:
                return False
            if not (outer.lo(i) <= inner.lo(i) and inner.hi(i) <= outer.hi(i)):
                return False
        else:
            if osp:
                if not (outer.lo(i) < inner.lo(i) < outer.hi(i)):
                    return False
            else:
                if inner.lo(i)._cmp(outer.lo(i)) != 0:
                    return False
    return True


def _coerce_point(x) -> list:
    if isinstance(x, (list, tuple)) and all(
            isinstance(v, (int, Fraction, DyadicScalar)) for v in x):
        return [DyadicScalar.coerce(v) for v in x]
    return None


def cell_membership(cell: Cell, x, eps: float = EPS_GEOM) -> Membership:
    """Classify x against cell: interior / relative boundary / outside.

    Interior and boundary are relative to the affine span; a 0-cell has
    itself as interior and empty boundary.  Points given with exact
    coordinates (int, Fraction, DyadicScalar) are classified exactly;
    float coordinates use the eps tolerance for wall coincidence.
    """
    exact = _coerce_point(x)
    if exact is not None:
        on_wall = False
        for i in range(cell.n):
            xi = exact[i]
            if cell.spans(i):
                if xi < cell.lo(i) or xi > cell.hi(i):
                    return Membership.OUTSIDE
                if xi._cmp(cell.lo(i)) == 0 or xi._cmp(cell.hi(i)) == 0:
                    on_wall = True
            else:
                if xi._cmp(cell.lo(i)) != 0:
                    return Membership.OUTSIDE
        return Membership.BOUNDARY if on_wall else Membership.INTERIOR

    x = np.asarray(x, dtype=float)
    on_wall = False
    for i in range(cell.n):
        xi = float(x[i])
        lo = cell.lo(i).to_float()
        hi = cell.hi(i).to_float()
        if cell.spans(i):
            if xi < lo - eps or xi > hi + eps:
                return Membership.OUTSIDE
            if abs(xi - lo) <= eps or abs(xi - hi) <= eps:
                on_wall = True
        else:
            if abs(xi - lo) > eps:
                return Membership.OUTSIDE
    return Membership.BOUNDARY if on_wall else Membership.INTERIOR


def point_in_closed_cell(cell: Cell, x, eps: float = EPS_GEOM) -> bool:
    return cell_membership(cell, x, eps) is not Membership.OUTSIDE


def point_in_interior(cell: Cell, x, eps: float = EPS_GEOM) -> bool:
    return cell_membership(cell, x, eps) is Membership.INTERIOR


def interior_mask(cell: Cell, pts: np.ndarray, eps: float = EPS_GEOM) -> np.ndarray:
    """Vectorized relative-interior membership for an (N, n) float array."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lo, hi = cell.bounds()
    ok = np.ones(len(pts), dtype=bool)
    for i in range(cell.n):
        xi = pts[:, i]
        if cell.spans(i):
            ok &= (xi > lo[i] + eps) & (xi < hi[i] - eps)
        else:
            ok &= np.abs(xi - lo[i]) <= eps
    return ok


def closed_mask(cell: Cell, pts: np.ndarray, eps: float = EPS_GEOM) -> np.ndarray:
    """Vectorized closed-cell membership for an (N, n) float array."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lo, hi = cell.bounds()
    ok = np.ones(len(pts), dtype=bool)
    for i in range(cell.n):
        xi = pts[:, i]
        if cell.spans(i):
            ok &= (xi >= lo[i] - eps) & (xi <= hi[i] + eps)
        else:
            ok &= np.abs(xi - lo[i]) <= eps
    return ok


def dist_to_cell(cell: Cell, x) -> float:
    """Euclidean distance from x to the closed cell."""
    x = np.asarray(x, dtype=float)
    lo, hi = cell.bounds()
    return float(np.linalg.norm(np.maximum(0.0, np.maximum(lo - x, x - hi))))


def dist_to_cell_boundary(cell: Cell, x) -> float:
    """Euclidean distance from x to the boundary of cell relative to its
    affine span.  Requires dim(cell) >= 1."""
    if cell.dim == 0:
        raise ValueError("0-cells have empty relative boundary")
    x = np.asarray(x, dtype=float)
    lo, hi = cell.bounds()
    span_idx = [i for i in range(cell.n) if cell.spans(i)]
    point_idx = [i for i in range(cell.n) if not cell.spans(i)]
    # squared distance off the affine span
    off2 = sum((x[i] - lo[i]) ** 2 for i in point_idx)
    u = x[span_idx]
    blo, bhi = lo[span_idx], hi[span_idx]
    outside = np.maximum(0.0, np.maximum(blo - u, u - bhi))
    if np.any(outside > 0):
        # nearest boundary point coincides with nearest point of the box
        # unless u is inside in every coordinate
        in_box_d2 = float(np.sum(outside ** 2))
        return math.sqrt(off2 + in_box_d2)
    # inside the box: walk to the nearest wall within the span
    wall = float(np.min(np.minimum(u - blo, bhi - u)))
    return math.sqrt(off2 + wall ** 2)


@dataclass
class DomainOracle:
    """Open set X described by distance queries.

    dist_to_complement is Euclidean d(x, X^c) (inf for X = R^n);
    dist_inf_to_complement is the sup-norm variant used by the chart
    construction; box_inside answers `closed box subset of X` exactly for
    the built-in domains.
    """

    dist_to_complement: Callable[[np.ndarray], float]
    bounding_box: tuple[np.ndarray, np.ndarray] | None = None
    dist_inf_to_complement: Callable[[np.ndarray], float] | None = None
    box_inside: Callable[[np.ndarray, np.ndarray], bool] | None = None
    description: str = ""

    def box_fits(self, lo: np.ndarray, hi: np.ndarray) -> bool:
        if self.box_inside is not None:
            return self.box_inside(np.asarray(lo, float), np.asarray(hi, float))
        c = 0.5 * (np.asarray(lo, float) + np.asarray(hi, float))
        half_diag = 0.5 * float(np.linalg.norm(np.asarray(hi, float) - lo))
        return self.dist_to_complement(c) > half_diag


def full_space(n: int, truncation_box=None) -> DomainOracle:
    if truncation_box is None:
        truncation_box = (np.full(n, -1.0), np.full(n, 1.0))
    lo, hi = (np.asarray(truncation_box[0], float), np.asarray(truncation_box[1], float))
    return DomainOracle(
        dist_to_complement=lambda x: math.inf,
        bounding_box=(lo, hi),
        dist_inf_to_complement=lambda x: math.inf,
        box_inside=lambda a, b: True,
        description=f"R^{n}",
    )


def open_box(lo, hi) -> DomainOracle:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise ValueError("empty box")

    def d2(x):
        x = np.asarray(x, dtype=float)
        m = float(np.min(np.minimum(x - lo, hi - x)))
        return max(m, 0.0)

    return DomainOracle(
        dist_to_complement=d2,
        bounding_box=(lo, hi),
        dist_inf_to_complement=d2,
        box_inside=lambda a, b: bool(np.all(a > lo) and np.all(b < hi)),
        description="open box",
    )


def box_minus_points(lo, hi, punctures) -> DomainOracle:
    box = open_box(lo, hi)
    pts = np.atleast_2d(np.asarray(punctures, dtype=float))

    def d(x):
        x = np.asarray(x, dtype=float)
        dp = float(np.min(np.linalg.norm(pts - x, axis=1)))
        return min(box.dist_to_complement(x), dp)

    def d_inf(x):
        x = np.asarray(x, dtype=float)
        dp = float(np.min(np.max(np.abs(pts - x), axis=1)))
        return min(box.dist_inf_to_complement(x), dp)

    def fits(a, b):
        if not box.box_inside(a, b):
            return False
        inside = np.all(pts >= a, axis=1) & np.all(pts <= b, axis=1)
        return not bool(np.any(inside))

    return DomainOracle(
        dist_to_complement=d,
        bounding_box=box.bounding_box,
        dist_inf_to_complement=d_inf,
        box_inside=fits,
        description="punctured box",
    )


def scale_radius(x, s: float, domain: DomainOracle) -> float:
    """min(s/(1+s) * d(x, X^c), s); the s = inf limit is d(x, X^c)."""
    if not (s > 0):
        raise ValueError("scale parameter must be positive")
    d = domain.dist_to_complement(np.asarray(x, dtype=float))
    if math.isinf(s):
        return d
    if math.isinf(d):
        return s
    return min(s / (1.0 + s) * d, s)
