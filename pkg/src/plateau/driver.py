"""Direct-method driver: refinement schedules, nested grid sequences,
sliding-deformation reports, and the minimization loop.

The loop alternates flattening onto grid skeletons with an off-grid polish
of the induced graph.  A step is accepted only when the measured energy
does not increase, so the accepted sequence is non-increasing by
construction rather than by trust in any single stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .complexes import Complex, cell_from_json, grid_complex
from .dyadic import EPS_GEOM, Cell, dist_to_cell, interior_mask
from .ffproj import ff_project, prune_low_mass_dcells
from .measure import (
    Integrand,
    QuasiminParams,
    SampledSet,
    ahlfors_audit,
    empty_set,
    energy_eval,
    load_csv,
    quasimin_audit,
    sample_polyline,
    sample_segment,
)
from .rng import stream

CELL_BUDGET = 300_000
RELAX_ITERS = 400
MAX_STALLS = 2


# ------------------------------------------------------------ schedules

def q_schedule(mu, count: int) -> list[int]:
    """Scale exponents whose dyadic contributions shrink the remaining
    margin to the half cube by a factor of at least mu per step.

    Each entry is the smallest exponent whose capacity fits under
    (1 - mu) times the current margin; the margin decreases geometrically
    and the capacities sum to 1/2 in the limit.  All arithmetic is exact.
    """
    m = Fraction(mu)
    if not 0 < m < 1:
        raise ValueError("mu must lie strictly inside (0, 1)")
    if not 0 <= count <= 60:
        raise ValueError("count must lie in [0, 60]")
    out = []
    margin = Fraction(1, 2)
    q = 0
    for _ in range(count):
        cap = (1 - m) * margin
        while Fraction(1, 2 ** q) > cap:
            q += 1
        out.append(q)
        margin -= Fraction(1, 2 ** q)
    return out


def _check_budget(width: Fraction, q: int, n: int) -> None:
    per_axis = width * 2 ** q
    if per_axis.denominator != 1:
        raise ValueError("cube walls must sit on the grid lattice")
    if (int(per_axis) + 1) ** n * 2 ** n > CELL_BUDGET:
        raise ValueError(f"scale 2^-{q} exhausts the cell budget over "
                         f"{n} axes")


def _interior_inside_open_cube(A: Cell, c: Fraction) -> bool:
    h = Fraction(1, 2 ** A.scale_exp) if A.scale_exp >= 0 \
        else Fraction(2 ** -A.scale_exp)
    for i in range(A.n):
        a = A.anchor[i].as_fraction()
        if A.spans(i):
            if a < -c or a + h > c:
                return False
        elif not -c < a < c:
            return False
    return True


def nested_complexes(direction: str, schedule: Sequence[int],
                     n: int) -> list[Complex]:
    """Grids filling (expanding) or retreating from (shrinking) the unit
    cube, one complex per schedule entry, outer boundary faces omitted.

    Expanding complexes grow by a ring of finer cells per step and each is
    a subcomplex of the next; at a ring interface only the finer wall
    faces are kept, the coarser grid having surrendered its outer boundary
    at the previous step.  Shrinking complexes are single-scale.
    """
    if direction not in ("expanding", "shrinking"):
        raise ValueError(f"unknown direction {direction!r}")
    qs = [int(q) for q in schedule]
    if not qs:
        return []
    if any(q < 1 for q in qs):
        raise ValueError("scales must be positive")
    if any(b < a for a, b in zip(qs, qs[1:])):
        raise ValueError("schedule must be non-decreasing")
    if direction == "expanding":
        return _expanding(qs, n)
    return _shrinking(qs, n)


def _expanding(qs: list[int], n: int) -> list[Complex]:
    c = Fraction(1, 2)
    _check_budget(2 * c, qs[0], n)
    base = grid_complex([float(-c)] * n, [float(c)] * n, qs[0],
                        include_boundary=False)
    out = [Complex(list(base.cells),
                   meta={"mode": "expanding", "k": 0, "scale": qs[0],
                         "half_width": float(c)})]
    for k in range(1, len(qs)):
        inner = c
        c = c + Fraction(1, 2 ** qs[k - 1])
        if c > 1:
            raise ValueError("schedule overruns the unit cube")
        _check_budget(2 * c, qs[k], n)
        fine = grid_complex([float(-c)] * n, [float(c)] * n, qs[k],
                            include_boundary=False)
        shell = [A for A in fine.cells
                 if not _interior_inside_open_cube(A, inner)]
        out.append(Complex(list(out[-1].cells) + shell,
                           meta={"mode": "expanding", "k": k,
                                 "scale": qs[k], "half_width": float(c)}))
    return out


def _shrinking(qs: list[int], n: int) -> list[Complex]:
    s = Fraction(1)
    out = []
    for k, q in enumerate(qs):
        if s <= 0:
            raise ValueError("schedule exhausts the cube")
        _check_budget(2 * s, q, n)
        K = grid_complex([float(-s)] * n, [float(s)] * n, q,
                         include_boundary=False)
        out.append(Complex(list(K.cells),
                           meta={"mode": "shrinking", "k": k, "scale": q,
                                 "half_width": float(s)}))
        s -= Fraction(1, 2 ** q)
    return out


# --------------------------------------------------------- configuration

@dataclass(frozen=True, eq=False)
class BoundarySpec:
    """Rigid boundary data: pinned anchor points and/or grid faces."""

    anchors: np.ndarray
    cells: tuple[Cell, ...] = ()

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        if a.size == 0:
            a = a.reshape(0, a.shape[1] if a.ndim == 2 and a.shape[1] else 1)
        if len(a) == 0 and not self.cells:
            raise ValueError("boundary needs anchors or cells")
        object.__setattr__(self, "anchors", a)

    @property
    def n(self) -> int:
        if len(self.anchors):
            return self.anchors.shape[1]
        return self.cells[0].n

    def distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.full(len(pts), np.inf)
        if len(self.anchors):
            gaps = np.linalg.norm(pts[:, None, :] - self.anchors[None], axis=2)
            d = np.minimum(d, gaps.min(axis=1))
        for A in self.cells:
            d = np.minimum(d, np.array([dist_to_cell(A, p) for p in pts]))
        return d


@dataclass(frozen=True)
class ScheduleSpec:
    mode: str  # uniform | mu
    iterations: int
    q: int = 3
    mu: float = 0.5

    def __post_init__(self):
        if self.mode not in ("uniform", "mu"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.mode == "uniform" and self.q < 1:
            raise ValueError("base scale must be >= 1")
        if self.mode == "mu" and not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class Tolerances:
    delta: float = 0.02
    lam: float = 20.0
    threshold_fraction: float = 0.25
    eps_geom: float = EPS_GEOM

    def __post_init__(self):
        if self.delta <= 0 or self.lam < 1 or self.threshold_fraction < 0:
            raise ValueError("bad tolerance values")


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """Everything a minimization run depends on; a run is a pure function
    of (config, seed)."""

    n: int
    d: int
    domain: tuple
    boundary: BoundarySpec
    initial: SampledSet | dict
    integrand: Integrand = field(default_factory=Integrand.hausdorff)
    schedule: ScheduleSpec = field(
        default_factory=lambda: ScheduleSpec("uniform", 2))
    quasimin: QuasiminParams = field(
        default_factory=lambda: QuasiminParams(kappa=1.25, h=0.01))
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        lo, hi = (np.asarray(v, dtype=float) for v in self.domain)
        if not 0 <= self.d < self.n:
            raise ValueError("need 0 <= d < n")
        if lo.shape != (self.n,) or hi.shape != (self.n,) or np.any(lo >= hi):
            raise ValueError("domain must be a non-empty box")
        if self.boundary.n != self.n:
            raise ValueError("boundary dimension mismatch")
        a = self.boundary.anchors
        if len(a) and (np.any(a < lo - 1e-12) or np.any(a > hi + 1e-12)):
            raise ValueError("boundary anchors must lie inside the domain")
        if self.schedule.mode == "mu":
            if np.any(lo != -1.0) or np.any(hi != 1.0):
                raise ValueError("nested schedules need the domain "
                                 "[-1, 1]^n")
        object.__setattr__(self, "domain",
                           (tuple(float(v) for v in lo),
                            tuple(float(v) for v in hi)))

    def initial_set(self) -> SampledSet:
        """Materialize the starting set with the anchors pinned as the
        leading rows (weights negligible, positions exact)."""
        spec = self.initial
        if isinstance(spec, SampledSet):
            S = spec
        else:
            kind = spec.get("kind")
            if kind == "polyline":
                S = sample_polyline(np.asarray(spec["vertices"], dtype=float),
                                    float(spec["spacing"]))
            elif kind == "star":
                if not len(self.boundary.anchors):
                    raise ValueError("a star initial set needs anchors")
                hub = self.boundary.anchors.mean(axis=0)
                parts = [sample_segment(a, hub, float(spec["spacing"]))
                         for a in self.boundary.anchors]
                pts = np.vstack([p.points for p in parts])
                w = np.concatenate([p.weights for p in parts])
                S = SampledSet(1, pts, w, min(p.delta for p in parts))
            elif kind == "csv":
                S = load_csv(spec["path"], self.d, float(spec["delta"]))
            else:
                raise ValueError(f"unknown initial kind {kind!r}")
        if S.d != self.d or S.n != self.n:
            raise ValueError("initial set dimensions disagree with config")
        return _with_anchor_rows(S, self.boundary.anchors)


def _with_anchor_rows(S: SampledSet, anchors: np.ndarray) -> SampledSet:
    if not len(anchors):
        return S
    pts = np.vstack([anchors, S.points])
    w = np.concatenate([np.full(len(anchors), 1e-12), S.weights])
    return SampledSet(S.d, pts, w, S.delta)


_TOP_KEYS = {"schema", "n", "d", "domain", "boundary", "initial",
             "integrand", "schedule", "quasimin", "seed", "tolerances"}


def _strict(obj: dict, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ValueError(f"{where} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown {where} fields: {sorted(unknown)}")


def config_from_json(obj: dict) -> ProblemConfig:
    _strict(obj, _TOP_KEYS, "config")
    if obj.get("schema") != 1:
        raise ValueError("unsupported config schema (want 1)")
    for key in ("n", "d", "domain", "boundary", "initial", "schedule"):
        if key not in obj:
            raise ValueError(f"config is missing {key!r}")
    dom = obj["domain"]
    _strict(dom, {"lo", "hi"}, "domain")
    bnd = obj["boundary"]
    _strict(bnd, {"anchors", "cells"}, "boundary")
    n = int(obj["n"])
    anchors = np.asarray(bnd.get("anchors", np.empty((0, n))), dtype=float)
    cells = tuple(cell_from_json(c) for c in bnd.get("cells", ()))
    init = obj["initial"]
    kinds = {"polyline": {"kind", "vertices", "spacing"},
             "star": {"kind", "spacing"},
             "csv": {"kind", "path", "delta"}}
    if init.get("kind") not in kinds:
        raise ValueError(f"unknown initial kind {init.get('kind')!r}")
    _strict(init, kinds[init["kind"]], "initial")
    integ = obj.get("integrand", {"kind": "hausdorff"})
    _strict(integ, {"kind"}, "integrand")
    if integ["kind"] != "hausdorff":
        raise ValueError("only the measure-weight integrand is "
                         "representable in JSON")
    sch = obj["schedule"]
    mode = sch.get("mode")
    if mode == "uniform":
        _strict(sch, {"mode", "q", "iterations"}, "schedule")
        schedule = ScheduleSpec("uniform", int(sch["iterations"]),
                                q=int(sch["q"]))
    elif mode == "mu":
        _strict(sch, {"mode", "mu", "iterations"}, "schedule")
        schedule = ScheduleSpec("mu", int(sch["iterations"]),
                                mu=float(sch["mu"]))
    else:
        raise ValueError(f"unknown schedule mode {mode!r}")
    qm = obj.get("quasimin", {})
    _strict(qm, {"kappa", "h", "scale"}, "quasimin")
    quasimin = QuasiminParams(kappa=float(qm.get("kappa", 1.25)),
                              h=float(qm.get("h", 0.01)),
                              scale=float(qm.get("scale", math.inf)))
    tl = obj.get("tolerances", {})
    _strict(tl, {"delta", "lambda", "threshold_fraction", "eps_geom"},
            "tolerances")
    tol = Tolerances(delta=float(tl.get("delta", 0.02)),
                     lam=float(tl.get("lambda", 20.0)),
                     threshold_fraction=float(tl.get("threshold_fraction",
                                                     0.25)),
                     eps_geom=float(tl.get("eps_geom", EPS_GEOM)))
    return ProblemConfig(n=n, d=int(obj["d"]),
                         domain=(dom["lo"], dom["hi"]),
                         boundary=BoundarySpec(anchors, cells),
                         initial=init, integrand=Integrand.hausdorff(),
                         schedule=schedule, quasimin=quasimin,
                         seed=int(obj.get("seed", 0)), tolerances=tol)


# ------------------------------------------------------ sliding reports

def radial_squeeze(points: np.ndarray, center: np.ndarray, r: float,
                   amount: float = 0.3) -> np.ndarray:
    """Contract toward the ball center, identity outside; a segment
    through the center is reparametrized, not shortened."""
    if not 0.0 <= amount < 1.0:
        raise ValueError("amount must lie in [0, 1)")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    center = np.asarray(center, dtype=float)
    u = pts - center
    t = np.linalg.norm(u, axis=1)
    g = np.where(t < r, 1.0 - amount * (1.0 - t / r), 1.0)
    return center + u * g[:, None]


def transverse_bump(points: np.ndarray, center: np.ndarray, r: float,
                    direction: np.ndarray, amount: float) -> np.ndarray:
    """Push sideways by a tent profile supported in the ball."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    center = np.asarray(center, dtype=float)
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    t = np.linalg.norm(pts - center, axis=1)
    bump = amount * np.clip(1.0 - t / r, 0.0, None)
    return pts + bump[:, None] * v[None, :]


def sliding_validate(E: SampledSet, f_images: np.ndarray,
                     gamma: BoundarySpec, U: tuple, C_bound: float,
                     eps: float = EPS_GEOM) -> dict:
    """Check a sampled deformation against the sliding rules in a ball.

    (a) the moved set sits compactly inside U, (b) boundary samples stay
    on the boundary set, (c) the ball maps into itself, (d) distances to
    the boundary set grow by at most C_bound.  Each check reports a
    pass flag and its worst witness.
    """
    f = np.atleast_2d(np.asarray(f_images, dtype=float))
    if f.shape != E.points.shape:
        raise ValueError("one image per sample required")
    center = np.asarray(U[0], dtype=float)
    radius = float(U[1])
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    disp = np.linalg.norm(f - E.points, axis=1)
    moved = disp > eps

    if moved.any():
        reach = np.maximum(np.linalg.norm(E.points[moved] - center, axis=1),
                           np.linalg.norm(f[moved] - center, axis=1))
        worst = int(np.argmax(reach))
        a = {"pass": bool(reach.max() < radius),
             "margin": float(radius - reach.max()),
             "witness": int(np.nonzero(moved)[0][worst])}
    else:
        a = {"pass": True, "margin": float(radius), "witness": None}

    base = gamma.distance(E.points)
    on_gamma = base <= eps
    if on_gamma.any():
        img_dist = gamma.distance(f[on_gamma])
        worst = int(np.argmax(img_dist))
        b = {"pass": bool(img_dist.max() <= eps),
             "worst": float(img_dist.max()),
             "witness": int(np.nonzero(on_gamma)[0][worst])}
    else:
        b = {"pass": True, "worst": 0.0, "witness": None}

    in_ball = np.linalg.norm(E.points - center, axis=1) <= radius
    if in_ball.any():
        out_dist = np.linalg.norm(f[in_ball] - center, axis=1)
        worst = int(np.argmax(out_dist))
        c = {"pass": bool(out_dist.max() <= radius + eps),
             "worst": float(out_dist.max() - radius),
             "witness": int(np.nonzero(in_ball)[0][worst])}
    else:
        c = {"pass": True, "worst": -radius, "witness": None}

    eligible = base > eps
    if eligible.any():
        ratio = gamma.distance(f[eligible]) / base[eligible]
        worst = int(np.argmax(ratio))
        d = {"pass": bool(ratio.max() <= C_bound * (1.0 + 1e-12)),
             "measured_C": float(ratio.max()),
             "witness": int(np.nonzero(eligible)[0][worst])}
    else:
        d = {"pass": True, "measured_C": 1.0, "witness": None}

    return {"a": a, "b": b, "c": c, "d": d,
            "ok": a["pass"] and b["pass"] and c["pass"] and d["pass"]}


# ------------------------------------------------------ skeleton graphs

@dataclass(eq=False)
class SkeletonGraph:
    nodes: np.ndarray
    edges: tuple

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        if nodes.size == 0:
            width = nodes.shape[1] if nodes.ndim == 2 and nodes.shape[1] else 2
            nodes = nodes.reshape(0, width)
        edges = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j or not (0 <= i < len(nodes) and 0 <= j < len(nodes)):
                raise ValueError(f"bad edge ({i}, {j})")
            edges.add((min(i, j), max(i, j)))
        self.nodes = nodes
        self.edges = tuple(sorted(edges))

    def length(self) -> float:
        return _length(self.nodes, self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(len(self.nodes), dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_json(self) -> dict:
        return {"nodes": [[float(v) for v in p] for p in self.nodes],
                "edges": [list(e) for e in self.edges]}


def _length(pos: np.ndarray, edges) -> float:
    if not edges:
        return 0.0
    e = np.array(sorted(edges))
    return float(np.sum(np.linalg.norm(pos[e[:, 0]] - pos[e[:, 1]], axis=1)))


def _adjacency(n_nodes: int, edges) -> list:
    adj = [[] for _ in range(n_nodes)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return [sorted(a) for a in adj]


def _components(n_nodes: int, edges) -> np.ndarray:
    comp = np.arange(n_nodes)

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    for i, j in edges:
        comp[find(i)] = find(j)
    return np.array([find(i) for i in range(n_nodes)])


def skeleton_graph(K: Complex, S: SampledSet,
                   anchors: np.ndarray | None = None
                   ) -> tuple[SkeletonGraph, list[int]]:
    """Graph of occupied curve cells, restricted to the components that
    reach the anchors and bridged so the anchors end up connected."""
    if S.d != 1:
        raise ValueError("skeleton graphs need d == 1")
    nodes: list = []
    index: dict = {}

    def node_at(p: np.ndarray) -> int:
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(nodes)
            nodes.append(np.asarray(p, dtype=float))
        return index[key]

    edges = set()
    for A in K.cells_of_dim(1):
        if len(S) and interior_mask(A, S.points).any():
            lo, hi = A.bounds()
            i, j = node_at(lo), node_at(hi)
            edges.add((min(i, j), max(i, j)))

    anchor_idx: list[int] = []
    anchors = np.empty((0, S.n)) if anchors is None else np.atleast_2d(anchors)
    for a in anchors:
        if nodes:
            gaps = np.linalg.norm(np.array(nodes) - a, axis=1)
            jmin = int(np.argmin(gaps))
            if gaps[jmin] <= 1e-9:
                anchor_idx.append(jmin)
                continue
            ia = node_at(a)
            edges.add((min(ia, jmin), max(ia, jmin)))
            anchor_idx.append(ia)
        else:
            anchor_idx.append(node_at(a))

    pos = np.array(nodes) if nodes else np.empty((0, S.n))
    comp = _components(len(pos), edges)
    keep_roots = {comp[i] for i in anchor_idx}
    keep = np.array([comp[i] in keep_roots for i in range(len(pos))],
                    dtype=bool)
    remap = -np.ones(len(pos), dtype=int)
    remap[keep] = np.arange(int(keep.sum()))
    pos = pos[keep]
    edges = {(remap[i], remap[j]) for i, j in edges if keep[i] and keep[j]}
    anchor_idx = [int(remap[i]) for i in anchor_idx]

    # bridge anchor components with shortest hops until connected
    while True:
        comp = _components(len(pos), edges)
        roots = sorted({comp[i] for i in anchor_idx})
        if len(roots) <= 1:
            break
        best = None
        left = comp == roots[0]
        for i in np.nonzero(left)[0]:
            gaps = np.linalg.norm(pos[~left] - pos[i], axis=1)
            j = int(np.argmin(gaps))
            cand = (float(gaps[j]), int(i), int(np.nonzero(~left)[0][j]))
            if best is None or cand < best:
                best = cand
        edges.add((min(best[1], best[2]), max(best[1], best[2])))

    return SkeletonGraph(pos, tuple(edges)), anchor_idx


# ------------------------------------------------------ graph relaxation

def _fermat_step(x: np.ndarray, pts) -> np.ndarray:
    diffs = np.array(pts) - x
    r = np.linalg.norm(diffs, axis=1)
    if np.any(r < 1e-12):
        return np.array(pts)[int(np.argmin(r))].copy()
    w = 1.0 / r
    return (np.array(pts) * w[:, None]).sum(axis=0) / w.sum()


def _split_gain(u_pos: np.ndarray, P: np.ndarray) -> tuple:
    """Best 2+2 regrouping of a four-way junction into two linked
    junctions; returns (cost, x1, x2, pairing)."""
    pairings = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))
    best = None
    for (a, b), (c, d) in pairings:
        x1 = (P[a] + P[b] + u_pos) / 3.0
        x2 = (P[c] + P[d] + u_pos) / 3.0
        for _ in range(80):
            x1 = _fermat_step(x1, (P[a], P[b], x2))
            x2 = _fermat_step(x2, (P[c], P[d], x1))
        cost = (np.linalg.norm(x1 - P[a]) + np.linalg.norm(x1 - P[b])
                + np.linalg.norm(x2 - P[c]) + np.linalg.norm(x2 - P[d])
                + np.linalg.norm(x1 - x2))
        if best is None or cost < best[0]:
            best = (float(cost), x1, x2, ((a, b), (c, d)))
    return best


def relax_skeleton(graph: SkeletonGraph, anchors: Sequence[int],
                   step: float = 1.0, iters: int = 200) -> SkeletonGraph:
    """Shorten a skeleton graph with the anchor nodes pinned.

    Per round: contract pass-through nodes, merge collapsed edges, split
    four-way junctions when a linked pair is strictly shorter, then sweep
    junction positions toward their local medians with backtracking.
    Every mutation is gated on the freshly summed total length, so the
    reported length never increases.  Junctions of degree five or more
    are left where coordinate descent puts them.
    """
    anchor_set = {int(i) for i in anchors}
    if any(not 0 <= i < len(graph.nodes) for i in anchor_set):
        raise ValueError("anchor index out of range")
    if step <= 0:
        raise ValueError("step must be positive")
    pos = graph.nodes.copy()
    edges = set(graph.edges)

    comp = _components(len(pos), edges)
    anchored = {comp[i] for i in anchor_set}
    for i in range(len(pos)):
        if comp[i] not in anchored:
            raise ValueError("connected component without an anchor node")

    cur = _length(pos, edges)
    for _ in range(iters):
        adj = _adjacency(len(pos), edges)
        deg = [len(a) for a in adj]

        # contract pass-through nodes
        for u in range(len(pos)):
            if u in anchor_set or deg[u] != 2:
                continue
            a, b = adj[u]
            cand = set(edges)
            cand.discard((min(a, u), max(a, u)))
            cand.discard((min(b, u), max(b, u)))
            cand.add((min(a, b), max(a, b)))
            new = _length(pos, cand)
            if new <= cur:
                edges = cand
                cur = new
                adj = _adjacency(len(pos), edges)
                deg = [len(x) for x in adj]

        # merge edges that have collapsed
        for i, j in sorted(edges):
            if i in anchor_set and j in anchor_set:
                continue
            if np.linalg.norm(pos[i] - pos[j]) >= 1e-7:
                continue
            dead, live = (i, j) if j in anchor_set else (j, i)
            cand = set()
            for p, q in edges:
                p = live if p == dead else p
                q = live if q == dead else q
                if p != q:
                    cand.add((min(p, q), max(p, q)))
            new = _length(pos, cand)
            if new <= cur:
                edges = cand
                cur = new
            break

        # split four-way junctions
        adj = _adjacency(len(pos), edges)
        for u in range(len(pos)):
            if u in anchor_set or len(adj[u]) != 4:
                continue
            nb = adj[u]
            cost, x1, x2, ((a, b), (c, d)) = _split_gain(pos[u],
                                                         pos[np.array(nb)])
            cand = {e for e in edges if u not in e}
            i1, i2 = len(pos), len(pos) + 1
            cand_pos = np.vstack([pos, x1[None], x2[None]])
            for i, v in ((i1, nb[a]), (i1, nb[b]), (i2, nb[c]), (i2, nb[d])):
                cand.add((min(i, v), max(i, v)))
            cand.add((i1, i2))
            new = _length(cand_pos, cand)
            if new < cur - 1e-12:
                pos, edges, cur = cand_pos, cand, new
                adj = _adjacency(len(pos), edges)

        # median descent with backtracking
        adj = _adjacency(len(pos), edges)
        snapshot = pos.copy()
        for u in range(len(pos)):
            if u in anchor_set or not adj[u]:
                continue
            nbr = pos[np.array(adj[u])]
            old = float(np.linalg.norm(nbr - pos[u], axis=1).sum())
            target = _fermat_step(pos[u], nbr)
            s = float(step)
            for _ in range(25):
                cand = pos[u] + s * (target - pos[u])
                new = float(np.linalg.norm(nbr - cand, axis=1).sum())
                if new <= old:
                    pos[u] = cand
                    break
                s *= 0.5
        swept = _length(pos, edges)
        if swept <= cur:
            cur = swept
        else:
            pos = snapshot  # summation-order wobble; keep the shorter state

    deg = np.zeros(len(pos), dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    keep = (deg > 0) | np.isin(np.arange(len(pos)), sorted(anchor_set))
    remap = -np.ones(len(pos), dtype=int)
    remap[keep] = np.arange(int(keep.sum()))
    return SkeletonGraph(pos[keep],
                         tuple((remap[i], remap[j]) for i, j in edges))


def resample_graph(graph: SkeletonGraph, spacing: float,
                   n: int | None = None) -> SampledSet:
    """Sample every edge; weights add up to the exact graph length."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if not graph.edges:
        return empty_set(1, n if n is not None else graph.nodes.shape[1],
                         spacing)
    parts = [sample_segment(graph.nodes[i], graph.nodes[j], spacing)
             for i, j in graph.edges]
    return SampledSet(1, np.vstack([p.points for p in parts]),
                      np.concatenate([p.weights for p in parts]),
                      min(p.delta for p in parts))


# ---------------------------------------------------------- minimization

@dataclass(frozen=True)
class IterationReport:
    k: int
    n_cells: int
    finest_scale: int
    energy_before: float
    energy_after: float
    pruned: int
    ahlfors_min: float
    ahlfors_max: float
    accepted: bool

    def __post_init__(self):
        if self.accepted and \
                self.energy_after > self.energy_before * (1.0 + 1e-12):
            raise ValueError("accepted step must not increase the energy")

    def to_json(self) -> dict:
        return {"k": self.k, "n_cells": self.n_cells,
                "finest_scale": self.finest_scale,
                "energy_before": self.energy_before,
                "energy_after": self.energy_after, "pruned": self.pruned,
                "ahlfors_min": self.ahlfors_min,
                "ahlfors_max": self.ahlfors_max, "accepted": self.accepted}


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    final: SampledSet
    reports: list
    audits: dict
    graph: SkeletonGraph | None = None

    def to_json(self) -> dict:
        return {"reports": [r.to_json() for r in self.reports],
                "audits": self.audits,
                "graph": self.graph.to_json() if self.graph else None}


def _complex_for(config: ProblemConfig, k: int, grids) -> Complex:
    if config.schedule.mode == "mu":
        return grids[k]
    lo, hi = config.domain
    return grid_complex(lo, hi, config.schedule.q + k)


def _audit_centers(S: SampledSet, anchors: np.ndarray,
                   count: int = 6) -> np.ndarray:
    if len(S) == 0:
        raise ValueError("cannot audit an empty set")
    if len(anchors):
        gaps = np.linalg.norm(S.points[:, None, :] - anchors[None],
                              axis=2).min(axis=1)
    else:
        gaps = np.zeros(len(S))
    order = np.argsort(-gaps, kind="stable")
    return S.points[order[:min(count, len(S))]]


def _final_audits(best: SampledSet, config: ProblemConfig) -> dict:
    tol = config.tolerances
    anchors = config.boundary.anchors
    radii = (4.0 * tol.delta, 8.0 * tol.delta)
    centers = _audit_centers(best, anchors)
    ah = ahlfors_audit(best, centers, radii)
    center = centers[0]
    r = 8.0 * tol.delta
    if config.quasimin.scale < r:
        r = 0.5 * config.quasimin.scale
    ball = (center, r)
    maps = {
        "identity": best.points.copy(),
        "taper": radial_squeeze(best.points, center, r, 0.3),
        "bump": transverse_bump(best.points, center, r,
                                np.arange(1, best.n + 1, dtype=float),
                                0.05 * r),
    }
    quasi = {name: quasimin_audit(best, img, ball, config.quasimin,
                                  config.integrand)
             for name, img in maps.items()}
    return {"ahlfors": {"min_ratio": ah["min_ratio"],
                        "max_ratio": ah["max_ratio"]},
            "quasimin": quasi,
            "ok": bool(all(q["satisfied"] for q in quasi.values())
                       and ah["min_ratio"] > 0.0)}


def minimize(config: ProblemConfig) -> MinimizeResult:
    """Accept-if-improved minimization over a refining grid sequence.

    Per iteration: flatten onto the current skeleton, prune skimpy cells,
    re-pin the anchors, polish the induced graph off-grid, resample, and
    keep the result only if the measured energy did not increase.  A
    tighter sample spacing (tolerances.delta) is the first knob to turn
    when center selection runs out of room.
    """
    tol = config.tolerances
    anchors = config.boundary.anchors
    M = len(anchors)
    grids = None
    if config.schedule.mode == "mu":
        qs = q_schedule(config.schedule.mu, config.schedule.iterations)
        grids = nested_complexes("expanding", qs, config.n)

    best = config.initial_set()
    best_energy = energy_eval(best, config.integrand)
    best_graph = None
    reports: list[IterationReport] = []
    stalls = 0

    for k in range(config.schedule.iterations):
        K = _complex_for(config, k, grids)
        classified = [K.minimal_cell_at(p) for p in best.points]
        inside = np.array([c is not None for c in classified], dtype=bool)
        work = best
        if inside.any():
            res = ff_project(K, config.d, best.restrict(inside),
                             lam=tol.lam,
                             rng=stream(config.seed, f"flatten-{k}"))
            pts = best.points.copy()
            pts[inside] = res.mapped.points
            work = best.with_points(pts)
        pre = work.points.copy()
        if config.d >= 1:
            work = prune_low_mass_dcells(K, config.d, work,
                                         tol.threshold_fraction,
                                         rng=stream(config.seed,
                                                    f"prune-{k}"))
        pruned = int(np.count_nonzero(np.any(work.points != pre, axis=1)))
        if M:
            pts = work.points.copy()
            pts[:M] = anchors
            work = work.with_points(pts)

        graph = None
        if config.d == 1 and M:
            graph, anchor_idx = skeleton_graph(K, work, anchors)
            graph = relax_skeleton(graph, anchor_idx, step=1.0,
                                   iters=RELAX_ITERS)
            cand = _with_anchor_rows(resample_graph(graph, tol.delta,
                                                    config.n), anchors)
        else:
            cand = work

        energy = energy_eval(cand, config.integrand)
        accepted = bool(energy <= best_energy)
        before = best_energy
        if accepted:
            best, best_energy, best_graph, stalls = cand, energy, graph, 0
        else:
            stalls += 1
        ah = ahlfors_audit(cand, _audit_centers(cand, anchors),
                           (4.0 * tol.delta, 8.0 * tol.delta))
        scale = config.schedule.q + k if config.schedule.mode == "uniform" \
            else int(K.meta["scale"])
        reports.append(IterationReport(
            k=k, n_cells=len(K), finest_scale=scale,
            energy_before=before, energy_after=energy, pruned=pruned,
            ahlfors_min=float(ah["min_ratio"]),
            ahlfors_max=float(ah["max_ratio"]), accepted=accepted))
        if stalls >= MAX_STALLS:
            break

    audits = _final_audits(best, config)
    return MinimizeResult(final=best, reports=reports, audits=audits,
                          graph=best_graph)
