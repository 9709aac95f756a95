"""Yoccoz puzzle of a quadratic polynomial, geometric and combinatorial.

Every piece is held twice: as the list of angle arcs it owns on its
equipotential (exact, used for all nesting decisions) and as a closed
polyline (used for membership of arbitrary points and for moduli).

Annulus convention: A_d(z) is the region between the boundaries of
P_{d-1}(z) and P_d(z), so that the mark of z_j at depth d (critical,
semi-critical, off-critical) decides how f maps A_d(z_j) onto
A_{d-1}(z_{j+1}).
"""
from __future__ import annotations

import bisect
import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from matplotlib.path import Path
from scipy.spatial import cKDTree

from .dynamics import Parameter, fixed_points, green_value
from .rays import (AngleCycle, NotLanded, TraceDiverged, alpha_cycle, angle, format_angle,
                   landing_point, preimage_angles, trace_many, trace_many_robust,
                   ExternalRay)
from .symbolic import arc_length, in_arc, pieces_from_groups

HALF = Fraction(1, 2)

ANNULUS_CONVENTION = ("A_d(z) is the annulus between the boundaries of P_{d-1}(z) and P_d(z); "
                      "mark (d, j) governs f: A_d(z_j) -> A_{d-1}(z_{j+1})")


class PuzzleError(RuntimeError):
    pass


class RaysDidNotLand(PuzzleError):
    pass


class InconsistentLanding(PuzzleError):
    pass


class PullbackFailed(PuzzleError):
    pass


class OnBoundary(PuzzleError):
    def __init__(self, z, depth, distance):
        super().__init__(f"{z} is within {distance:.2e} of a depth-{depth} boundary")
        self.z = z
        self.depth = depth
        self.distance = distance


class OutsidePuzzle(PuzzleError):
    pass


class NotNested(PuzzleError):
    pass


def polyline_distance(points, poly) -> np.ndarray:
    """Distance from each point to a closed polyline."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    a = np.asarray(poly, dtype=complex)
    b = np.roll(a, -1)
    ab = b - a
    L2 = np.abs(ab) ** 2
    L2[L2 == 0] = 1.0
    out = np.empty(len(pts))
    for i0 in range(0, len(pts), 256):
        p = pts[i0:i0 + 256, None]
        s = np.clip(((p - a) * np.conj(ab)).real / L2, 0.0, 1.0)
        out[i0:i0 + 256] = np.abs(p - (a + s * ab)).min(axis=1)
    return out


def polyline_gap(poly1, poly2) -> float:
    """Minimum distance between two closed polylines."""
    p1 = np.asarray(poly1, dtype=complex)
    p2 = np.asarray(poly2, dtype=complex)
    return float(min(polyline_distance(p1, p2).min(), polyline_distance(p2, p1).min()))


def _path(poly) -> Path:
    pts = np.column_stack([poly.real, poly.imag])
    return Path(np.vstack([pts, pts[:1]]), closed=True)


class PuzzlePiece:
    """One piece P_d^j.  The polyline boundary is traced on first use."""

    def __init__(self, depth: int, id: int, arcs, level: float, contains_critical: bool = False,
                 landing_points=(), boundary=None, builder=None):
        self.depth = depth
        self.id = id
        self.arcs = list(arcs)
        self.level = level
        self.contains_critical = contains_critical
        self.landing_points = list(landing_points)
        self._boundary = None if boundary is None else np.asarray(boundary, dtype=complex)
        self._builder = builder
        self._path = None

    def __repr__(self):
        return f"PuzzlePiece(depth={self.depth}, id={self.id}, arcs={len(self.arcs)})"

    @property
    def boundary(self) -> np.ndarray:
        if self._boundary is None:
            self._boundary = self._builder(self)
        return self._boundary

    @boundary.setter
    def boundary(self, value):
        self._boundary = np.asarray(value, dtype=complex)
        self._path = None

    @property
    def angles(self) -> frozenset:
        return frozenset(x for arc in self.arcs for x in arc)

    @property
    def path(self) -> Path:
        if self._path is None:
            self._path = _path(self.boundary)
        return self._path

    def contains_points(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return self.path.contains_points(np.column_stack([z.real, z.imag]))

    def owns_angle(self, x: Fraction) -> bool:
        return any(in_arc(x, a, b) for a, b in self.arcs)

    def diameter(self) -> float:
        b = self.boundary
        hull = b[:: max(1, len(b) // 400)]
        return float(np.abs(hull[:, None] - hull[None, :]).max())

    def interior_samples(self, n: int, rng, delta: float = 0.0, max_tries: int = 200) -> np.ndarray:
        """Uniform random points inside the piece, at least ``delta`` from its boundary."""
        b = self.boundary
        lo = complex(b.real.min(), b.imag.min())
        hi = complex(b.real.max(), b.imag.max())
        out = []
        for _ in range(max_tries):
            z = lo.real + (hi.real - lo.real) * rng.random(4 * n) + 1j * (lo.imag + (hi.imag - lo.imag) * rng.random(4 * n))
            z = z[self.contains_points(z)]
            if delta > 0 and len(z):
                z = z[polyline_distance(z, b) > delta]
            out.extend(z.tolist())
            if len(out) >= n:
                break
        return np.array(out[:n], dtype=complex)


@dataclass
class AnnulusRegion:
    outer: np.ndarray
    inner: np.ndarray
    pinch_points: list = field(default_factory=list)
    label: str = ""

    @property
    def degenerate(self) -> bool:
        return bool(self.pinch_points)


def find_pinches(outer, inner, delta: float) -> list:
    """Points of the inner curve within ``delta`` of the outer curve, one
    representative per connected run along the inner curve."""
    inner = np.asarray(inner, dtype=complex)
    close = polyline_distance(inner, outer) <= delta
    if not close.any():
        return []
    runs = []
    n = len(inner)
    idx = np.flatnonzero(close)
    start = idx[0]
    prev = idx[0]
    for i in idx[1:]:
        if i != prev + 1:
            runs.append((start, prev))
            start = i
        prev = i
    runs.append((start, prev))
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][1] == n - 1:
        runs[0] = (runs[-1][0] - n, runs[0][1])
        runs.pop()
    return [complex(inner[(s + e) // 2 % n]) for s, e in runs]


def annulus_region(outer, inner, delta: float = 1e-6, label: str = "") -> AnnulusRegion:
    outer = np.asarray(outer, dtype=complex)
    inner = np.asarray(inner, dtype=complex)
    inside = _path(outer).contains_points(np.column_stack([inner.real, inner.imag]))
    on = polyline_distance(inner, outer) <= delta
    if not np.all(inside | on):
        raise NotNested("inner curve is not inside the outer curve")
    return AnnulusRegion(outer=outer, inner=inner, pinch_points=find_pinches(outer, inner, delta), label=label)


class Puzzle:
    """Yoccoz puzzle built from the alpha-cycle rays and the equipotential
    of Green level ``r0``; depth d uses the equipotential r0 / 2**d."""

    def __init__(self, param: Parameter, cycle: Optional[AngleCycle] = None, r0: float = 1.0,
                 per_halving: int = 8, dive: int = 20, eq_density: int = 2048, delta: float = 1e-6):
        if cycle is None:
            if param.limb is None:
                raise ValueError("need a limb p/q or an explicit alpha cycle")
            cycle = alpha_cycle(param.limb)
        self.param = param
        self.cycle = cycle
        self.r0 = float(r0)
        self.per_halving = per_halving
        self.dive = dive
        self.eq_density = eq_density
        self.delta = delta
        self.levels: list[list[PuzzlePiece]] = []
        self.boundary_angles: list[list[Fraction]] = []
        self.ray_samples: dict = {}
        self.ray_depth: dict = {}
        self.landing: dict = {}
        self.group_of: dict = {}
        self._critical: list[PuzzlePiece] = []
        self.alpha = None

    # -- construction -----------------------------------------------------
    @classmethod
    def build(cls, param: Parameter, depth: int, **kw) -> "Puzzle":
        pz = cls(param, **kw)
        pz.build_depth_zero()
        for _ in range(depth):
            pz.refine()
        return pz

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def level(self, d: int) -> float:
        return self.r0 / 2**d

    def _ray_potentials(self, d: int) -> np.ndarray:
        k = np.arange(self.dive * self.per_halving + 1)
        return self.level(d) * 2.0 ** (-k / self.per_halving)

    def _trace_rays(self, angles, d):
        t = self._ray_potentials(d)
        out = {}
        for i in range(0, len(angles), 512):
            part = angles[i:i + 512]
            try:
                z = trace_many_robust(self.param, part, t)
            except TraceDiverged as exc:
                raise PullbackFailed(f"ray {exc.angle} could not be traced at depth {d}") from exc
            for j, a in enumerate(part):
                out[a] = z[:, j]
        return out

    def build_depth_zero(self) -> list[PuzzlePiece]:
        if self.levels:
            return self.levels[0]
        angles = list(self.cycle.angles)
        traced = self._trace_rays(angles, 0)
        lands = []
        for a in angles:
            ray = ExternalRay(angle=a, samples=traced[a], potentials=self._ray_potentials(0),
                              per_halving=self.per_halving)
            try:
                lands.append(landing_point(ray, self.param))
            except NotLanded as exc:
                raise RaysDidNotLand(f"ray {format_angle(a)}: {exc}") from exc
        spread = max(abs(x - lands[0]) for x in lands)
        if spread > 1e-4:
            raise InconsistentLanding(f"alpha-cycle rays land {spread:.2e} apart")
        alpha = fixed_points(self.param).alpha
        if abs(alpha - lands[0]) > 1e-4:
            alpha = fixed_points(self.param).beta
            if abs(alpha - lands[0]) > 1e-4:
                raise InconsistentLanding("alpha-cycle rays do not land at a fixed point")
        self.alpha = alpha
        group = frozenset(angles)
        for a in angles:
            self.ray_samples[a] = traced[a]
            self.ray_depth[a] = 0
            self.landing[a] = alpha
            self.group_of[a] = group
        self.boundary_angles.append(sorted(angles))
        self._make_pieces(0)
        return self.levels[0]

    def refine(self) -> "Puzzle":
        if not self.levels:
            self.build_depth_zero()
        d = self.depth + 1
        old = self.boundary_angles[-1]
        new = sorted({x for a in old for x in preimage_angles(a)} - set(old))
        traced = self._trace_rays(new, d)
        c = self.param.c
        groups: dict = {}
        for a in new:
            y = self.landing[angle(2 * a)]
            s = cmath.sqrt(y - c)
            tip = traced[a][-1]
            root = s if abs(tip - s) <= abs(tip + s) else -s
            if abs(root - self.alpha) < 1e-12:
                raise PullbackFailed(f"ray {format_angle(a)} pulled back onto alpha")
            self.ray_samples[a] = traced[a]
            self.ray_depth[a] = d
            self.landing[a] = root
            groups.setdefault((self.group_of[angle(2 * a)], root == s), []).append(a)
        q = len(self.cycle)
        for members in groups.values():
            if len(members) != q:
                raise PullbackFailed(f"landing group of size {len(members)} at depth {d}, expected {q}")
            g = frozenset(members)
            for a in members:
                self.group_of[a] = g
        self.boundary_angles.append(sorted(set(old) | set(new)))
        self._make_pieces(d)
        return self

    def ray_segment(self, a: Fraction, d: int) -> np.ndarray:
        """Samples of the ray at ``a`` from the depth-d equipotential down."""
        off = (d - self.ray_depth[a]) * self.per_halving
        return self.ray_samples[a][off:]

    def _make_pieces(self, d: int):
        angles = self.boundary_angles[d]
        group_of = {a: self.group_of[a] for a in angles}
        level = self.level(d)
        pieces = []
        crit = []
        for i, arcs in enumerate(pieces_from_groups(angles, group_of)):
            lands = [self.landing[b] for _, b in arcs]
            p = PuzzlePiece(depth=d, id=i, arcs=arcs, level=level, landing_points=lands,
                            builder=self._trace_boundary)
            if d == 0:
                if p.contains_points([0j])[0]:
                    crit.append(p)
            elif p.owns_angle(angle(_arc_mid(arcs[0]) + HALF)):
                # z -> -z moves angles by 1/2; only the critical piece is symmetric
                crit.append(p)
            pieces.append(p)
        if len(crit) != 1:
            raise PullbackFailed(f"{len(crit)} symmetric pieces at depth {d}, expected one")
        crit[0].contains_critical = True
        self.levels.append(pieces)
        self._critical.append(crit[0])

    def _trace_boundary(self, piece: PuzzlePiece) -> np.ndarray:
        d = piece.depth
        eq_angles, owners = [], []
        for k, (a, b) in enumerate(piece.arcs):
            ln = arc_length(a, b)
            m = max(2, math.ceil(float(ln) * self.eq_density))
            for i in range(1, m):
                eq_angles.append(angle(a + ln * Fraction(i, m)))
                owners.append(k)
        eq = trace_many(self.param, eq_angles, [piece.level])[0]
        owners = np.array(owners)
        chunks = []
        for k, (a, b) in enumerate(piece.arcs):
            chunks.append(self.ray_segment(a, d)[:1])
            chunks.append(eq[owners == k])
            chunks.append(self.ray_segment(b, d))
            chunks.append(np.array([self.landing[b]]))
            chunks.append(self.ray_segment(self._pred(b), d)[::-1][:-1])
        return np.concatenate(chunks)

    def _pred(self, b: Fraction) -> Fraction:
        g = sorted(self.group_of[b])
        return g[g.index(b) - 1]

    # -- queries ----------------------------------------------------------
    def critical_piece(self, d: int) -> PuzzlePiece:
        return self._critical[d]

    def piece_by_angle(self, d: int, x: Fraction) -> PuzzlePiece:
        for p in self.levels[d]:
            if p.owns_angle(x):
                return p
        raise ValueError(f"angle {x} is a depth-{d} boundary angle")

    def parent(self, piece: PuzzlePiece) -> PuzzlePiece:
        if piece.depth == 0:
            raise ValueError("depth-0 pieces have no parent")
        a, b = piece.arcs[0]
        mid = angle(a + arc_length(a, b) / 2)
        return self.piece_by_angle(piece.depth - 1, mid)

    def image(self, piece: PuzzlePiece) -> PuzzlePiece:
        """The depth-(d-1) piece f(piece), read off the doubled arcs."""
        if piece.depth == 0:
            raise ValueError("depth-0 pieces are not mapped into the puzzle")
        a, b = piece.arcs[0]
        mid = angle(2 * (a + arc_length(a, b) / 2))
        return self.piece_by_angle(piece.depth - 1, mid)

    def piece_containing(self, d: int, z: complex, delta: Optional[float] = None) -> PuzzlePiece:
        delta = self.delta if delta is None else delta
        z = complex(z)
        if green_value(self.param, z) > self.level(d) * (1 + 1e-9):
            raise OutsidePuzzle(f"{z} lies above the depth-{d} equipotential")
        best = None
        for p in self.levels[d]:
            if p.contains_points([z])[0]:
                best = p
                break
        near = None
        cands = [best] if best is not None else self.levels[d]
        for p in cands:
            dist = polyline_distance([z], p.boundary)[0]
            if dist <= delta:
                raise OnBoundary(z, d, dist)
            near = dist if near is None else min(near, dist)
        if best is None:
            raise OutsidePuzzle(f"{z} is not inside any depth-{d} piece")
        return best

    def critical_membership(self, d: int, z: complex) -> Optional[bool]:
        """z in P_d(0)?  None when z is within delta of its boundary."""
        p = self.critical_piece(d)
        z = complex(z)
        if green_value(self.param, z) > self.level(d) * (1 + 1e-9):
            return False
        dist = polyline_distance([z], p.boundary)[0]
        if dist <= self.delta:
            return None
        return bool(p.contains_points([z])[0])

    def critical_membership_many(self, d: int, zs, greens=None) -> list:
        """critical_membership for many points; ``greens`` skips recomputing G."""
        zs = np.asarray(zs, dtype=complex)
        if greens is None:
            greens = green_value(self.param, zs)
        p = self.critical_piece(d)
        out = [None] * len(zs)
        above = np.asarray(greens) > self.level(d) * (1 + 1e-9)
        idx = np.flatnonzero(~above)
        inside = p.contains_points(zs[idx]) if len(idx) else []
        dist = polyline_distance(zs[idx], p.boundary) if len(idx) else []
        for k in np.flatnonzero(above):
            out[k] = False
        for k, i in enumerate(idx):
            out[i] = None if dist[k] <= self.delta else bool(inside[k])
        return out

    def annulus_between(self, outer: PuzzlePiece, inner: PuzzlePiece, label: str = "") -> AnnulusRegion:
        if inner.depth <= outer.depth or not self.is_ancestor(outer, inner):
            raise NotNested(f"piece {inner.depth}:{inner.id} is not inside {outer.depth}:{outer.id}")
        region = AnnulusRegion(outer=outer.boundary, inner=inner.boundary, label=label)
        region.pinch_points = find_pinches(outer.boundary, inner.boundary, self.delta)
        return region

    def is_ancestor(self, outer: PuzzlePiece, inner: PuzzlePiece) -> bool:
        p = inner
        while p.depth > outer.depth:
            p = self.parent(p)
        return p is outer

    def separation(self, d: int) -> float:
        """Minimum distance between the boundaries of P_d(0) and P_{d+2}(0)."""
        return nested_gap(self.critical_piece(d).boundary, self.critical_piece(d + 2).boundary)

    def critical_annulus(self, d: int) -> AnnulusRegion:
        """A_d(0), between P_{d-1}(0) and P_d(0)."""
        return self.annulus_between(self.critical_piece(d - 1), self.critical_piece(d), label=f"A_{d}(0)")


def nested_gap(outer, inner) -> float:
    """Minimum distance between two polylines, exact for shared vertices."""
    outer = np.asarray(outer, dtype=complex)
    inner = np.asarray(inner, dtype=complex)
    tree = cKDTree(np.column_stack([outer.real, outer.imag]))
    dist, _ = tree.query(np.column_stack([inner.real, inner.imag]))
    if dist.min() == 0:
        return 0.0
    # refine against segments near the closest vertices
    order = np.argsort(dist)[:64]
    best = polyline_distance(inner[order], outer).min()
    tree2 = cKDTree(np.column_stack([inner.real, inner.imag]))
    dist2, _ = tree2.query(np.column_stack([outer.real, outer.imag]))
    order2 = np.argsort(dist2)[:64]
    best = min(best, polyline_distance(outer[order2], inner).min())
    return float(best)


def markov_check(puzzle: Puzzle, samples: int = 20, seed: int = 0, tol: Optional[float] = None,
                 pieces: Optional[list] = None) -> dict:
    """Check that any two pieces are nested or have disjoint interiors.

    Symbolic part: every piece's arcs lie in the arcs of exactly one piece
    one level up.  Geometric part: interior samples of each piece fall in
    its ancestors and in no other piece of the same or a shallower depth.
    """
    tol = puzzle.delta * 10 if tol is None else tol
    levels = pieces if pieces is not None else puzzle.levels
    rng = np.random.default_rng(seed)
    violations = []
    pairs = 0
    for d in range(1, len(levels)):
        for p in levels[d]:
            owners = set()
            for a, b in p.arcs:
                mid = angle(a + arc_length(a, b) / 2)
                for q in levels[d - 1]:
                    if q.owns_angle(mid):
                        owners.add(q.id)
            if len(owners) != 1:
                violations.append({"kind": "symbolic", "depth": d, "piece": p.id,
                                   "parents": sorted(owners)})
    ancestry = {}
    for d in range(len(levels)):
        for p in levels[d]:
            chain = {(d, p.id)}
            if d > 0:
                chain |= ancestry[(d - 1, _owner(levels[d - 1], p).id)]
            ancestry[(d, p.id)] = chain
    for d in range(len(levels)):
        for p in levels[d]:
            z = p.interior_samples(samples, rng, delta=tol)
            if len(z) == 0:
                continue
            for e in range(d + 1):
                for q in levels[e]:
                    if q is p:
                        continue
                    pairs += 1
                    inside = q.contains_points(z)
                    far = polyline_distance(z, q.boundary) > tol
                    nested = (e, q.id) in ancestry[(d, p.id)]
                    if nested:
                        bad = (~inside) & far
                    else:
                        bad = inside & far
                    if bad.any():
                        sep = float(polyline_distance(z[bad], q.boundary).max())
                        violations.append({"kind": "contained" if nested else "overlap",
                                           "piece": [d, p.id], "other": [e, q.id],
                                           "count": int(bad.sum()), "separation": sep})
    return {"violations": violations, "pairs_checked": pairs, "depths": len(levels),
            "samples_per_piece": samples, "tolerance": tol}


def _arc_mid(arc) -> Fraction:
    a, b = arc
    return angle(a + arc_length(a, b) / 2)


def _owner(level, piece):
    a, b = piece.arcs[0]
    mid = angle(a + arc_length(a, b) / 2)
    for q in level:
        if q.owns_angle(mid):
            return q
    raise ValueError("orphan piece")


def forward_covariance(puzzle: Puzzle, depth: int, samples: int = 100, seed: int = 0,
                       tol: Optional[float] = None) -> dict:
    """Check f(P_{d+1}(z)) is inside P_d(f(z)) on random interior points.

    Across the equipotential the inclusion is exact (G(f(z)) = 2 G(z)), and
    the polylines cut its arcs by chords, so samples keep 1% of the level
    below the equipotential and the check tests the ray sides.
    """
    tol = puzzle.delta * 10 if tol is None else tol
    rng = np.random.default_rng(seed)
    escapes = []
    checked = 0
    for p in puzzle.levels[depth + 1]:
        target = puzzle.image(p)
        z = p.interior_samples(samples, rng, delta=tol)
        if len(z):
            z = z[green_value(puzzle.param, z) < 0.99 * puzzle.level(depth + 1)]
        w = z * z + puzzle.param.c
        ok = target.contains_points(w)
        far = polyline_distance(w, target.boundary) > tol
        bad = (~ok) & far
        checked += len(z)
        if bad.any():
            escapes.append({"piece": p.id, "image": target.id, "count": int(bad.sum())})
    return {"depth": depth, "checked": checked, "escapes": escapes}


def degree_check(puzzle: Puzzle, piece: PuzzlePiece, samples: int = 50, seed: int = 0) -> list:
    """Preimage counts in ``piece`` of random points of its image."""
    rng = np.random.default_rng(seed)
    target = puzzle.image(piece)
    w = target.interior_samples(samples, rng, delta=puzzle.delta * 10)
    s = np.sqrt(w - puzzle.param.c)
    counts = piece.contains_points(s).astype(int) + piece.contains_points(-s).astype(int)
    return counts.tolist()
