"""Conformal modulus of a doubly connected region on a uniform grid.

The harmonic measure u (0 on the inner boundary, 1 on the outer one) is the
minimiser of the discrete Dirichlet energy sum over grid edges of
(u_p - u_q)**2.  Edges cut by a boundary curve get conductance 1/s, where
s is the fraction of the edge inside the region, with the boundary value
placed at the crossing.  The modulus is 1 / energy.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pyamg
from scipy import ndimage, sparse
from scipy.sparse.linalg import cg

from .puzzle import AnnulusRegion, find_pinches, nested_gap

DEFAULT_DELTA = 1e-6
MIN_CUT = 1e-2

INTERIOR, INNER, OUTER_BOUNDARY, EXTERIOR = 0, 1, 2, 3


class ModulusError(RuntimeError):
    pass


class Disconnected(ModulusError):
    """The grid interior splits into several pieces; the region is degenerate."""
    value = 0.0

    def __init__(self, msg, components=0):
        super().__init__(msg)
        self.components = components


class ResolutionTooCoarse(ModulusError):
    def __init__(self, msg, gap=None, cell=None):
        super().__init__(msg)
        self.gap = gap
        self.cell = cell


class NotASubdivision(ModulusError):
    pass


@dataclass
class GridDiscretization:
    origin: complex
    h: float
    n: int
    inside_outer: np.ndarray
    inside_inner: np.ndarray

    @property
    def cells(self) -> np.ndarray:
        """Node classes: INTERIOR, INNER (u=0), EXTERIOR (u=1)."""
        out = np.full(self.inside_outer.shape, EXTERIOR, dtype=np.int8)
        out[self.inside_outer] = INTERIOR
        out[self.inside_inner] = INNER
        return out

    @property
    def interior(self) -> np.ndarray:
        return self.inside_outer & ~self.inside_inner

    @property
    def bounding_box(self) -> tuple:
        far = self.origin + (self.n - 1) * self.h * (1 + 1j)
        return (self.origin.real, far.real, self.origin.imag, far.imag)


@dataclass
class ModulusEstimate:
    value: float
    resolution: int
    residual: float
    degenerate: bool = False
    refinement_history: list = field(default_factory=list)
    pinch_points: list = field(default_factory=list)
    uncertainty: float = 0.0
    gap: float = math.inf
    energy: float = math.inf
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "resolution": self.resolution,
            "residual": self.residual,
            "degenerate": self.degenerate,
            "refinement_history": [[n, v] for n, v in self.refinement_history],
            "pinch_points": [[z.real, z.imag] for z in self.pinch_points],
            "uncertainty": self.uncertainty,
            "gap": self.gap if math.isfinite(self.gap) else None,
            "iterations": self.iterations,
        }


def _crossings(poly: np.ndarray, coord: np.ndarray, other: np.ndarray, n: int):
    """Crossings of a closed polyline with the lines coord = k (grid units).

    Returns sorted keys k*(n+2) + other_at_crossing.  Segments count on the
    half-open range [min, max) so parities are exact at vertices.
    """
    a, b = coord, np.roll(coord, -1)
    oa, ob = other, np.roll(other, -1)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    first = np.ceil(lo).astype(np.int64)
    last = np.ceil(hi).astype(np.int64) - 1
    count = np.maximum(last - first + 1, 0)
    count[a == b] = 0
    seg = np.repeat(np.arange(len(a)), count)
    k = np.repeat(first, count) + (np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count))
    t = (k - a[seg]) / (b[seg] - a[seg])
    x = oa[seg] + t * (ob[seg] - oa[seg])
    keep = (k >= 0) & (k < n)
    keys = k[keep] * (n + 2) + np.clip(x[keep], -1.0, n + 0.5)
    return np.sort(keys)


def _inside(keys: np.ndarray, n: int) -> np.ndarray:
    """Even-odd fill: node (row k, column i) is inside iff an odd number of
    crossings on row k lie left of column i."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    left = np.searchsorted(keys, k * (n + 2) + i)
    start = np.searchsorted(keys, k * (n + 2) - 1.5)
    return ((left - start) % 2 == 1)


def _cut_fraction(keys, n, line, lo_pos, from_low):
    """Distance from the region node to the nearest crossing along an edge,
    in cells; 0.5 when the crossing is missed by rounding."""
    base = line * (n + 2) + lo_pos
    if from_low:
        idx = np.searchsorted(keys, base)
        ok = idx < len(keys)
        s = np.full(len(base), 0.5)
        s[ok] = keys[idx[ok]] - base[ok]
    else:
        idx = np.searchsorted(keys, base + 1, side="right") - 1
        ok = idx >= 0
        s = np.full(len(base), 0.5)
        s[ok] = base[ok] + 1 - keys[idx[ok]]
    s[(s < 0) | (s > 1)] = 0.5
    return np.clip(s, MIN_CUT, 1.0)


def discretize(region: AnnulusRegion, resolution: int) -> tuple[GridDiscretization, dict]:
    outer = np.asarray(region.outer, dtype=complex)
    inner = np.asarray(region.inner, dtype=complex)
    n = int(resolution)
    x0, x1 = outer.real.min(), outer.real.max()
    y0, y1 = outer.imag.min(), outer.imag.max()
    side = max(x1 - x0, y1 - y0)
    h = side / (n - 5)
    origin = complex(0.5 * (x0 + x1) - 0.5 * (n - 1) * h, 0.5 * (y0 + y1) - 0.5 * (n - 1) * h)
    curves = {}
    for name, poly in (("outer", outer), ("inner", inner)):
        gx = (poly.real - origin.real) / h
        gy = (poly.imag - origin.imag) / h
        # rows: lines y = k, crossings located by x; columns: lines x = k
        curves[name] = (_crossings(poly, gy, gx, n), _crossings(poly, gx, gy, n))
    grid = GridDiscretization(origin=origin, h=h, n=n,
                              inside_outer=_inside(curves["outer"][0], n),
                              inside_inner=_inside(curves["inner"][0], n))
    return grid, curves


def _assemble(grid: GridDiscretization, curves: dict, swap: bool):
    n = grid.n
    region = grid.interior
    idx = -np.ones(region.shape, dtype=np.int64)
    idx[region] = np.arange(region.sum())
    m = int(region.sum())
    g_inner, g_outer = (1.0, 0.0) if swap else (0.0, 1.0)
    rows, cols, vals = [], [], []
    diag = np.zeros(m)
    rhs = np.zeros(m)
    cut_edges = []
    # axis 1: edges along rows (node (k, i) to (k, i+1)); axis 0: along columns
    for axis in (1, 0):
        a = region[:, :-1] if axis == 1 else region[:-1, :]
        b = region[:, 1:] if axis == 1 else region[1:, :]
        ka, ia = np.nonzero(a & b) if axis == 1 else np.nonzero((a & b).T)
        if axis == 1:
            p, q = idx[ka, ia], idx[ka, ia + 1]
        else:
            p, q = idx[ia, ka], idx[ia + 1, ka]
        rows += [p, q]
        cols += [q, p]
        vals += [-np.ones(len(p)), -np.ones(len(p))]
        np.add.at(diag, p, 1.0)
        np.add.at(diag, q, 1.0)
        for from_low in (True, False):
            # region node at the low end, neighbour outside, or vice versa
            if from_low:
                mask = a & ~b
            else:
                mask = ~a & b
            if axis == 0:
                mask = mask.T
            line, pos = np.nonzero(mask)
            if axis == 1:
                node = (line, pos) if from_low else (line, pos + 1)
                nb = (line, pos + 1) if from_low else (line, pos)
                keyset = 0
            else:
                node = (pos, line) if from_low else (pos + 1, line)
                nb = (pos + 1, line) if from_low else (pos, line)
                keyset = 1
            into_inner = grid.inside_inner[nb]
            s = np.empty(len(line))
            for name, sel in (("inner", into_inner), ("outer", ~into_inner)):
                if sel.any():
                    s[sel] = _cut_fraction(curves[name][keyset], n, line[sel], pos[sel].astype(float), from_low)
            w = 1.0 / s
            g = np.where(into_inner, g_inner, g_outer)
            pi = idx[node]
            np.add.at(diag, pi, w)
            np.add.at(rhs, pi, w * g)
            cut_edges.append((pi, w, g))
    rows.append(np.arange(m))
    cols.append(np.arange(m))
    vals.append(diag)
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
    return A, rhs, idx, cut_edges


def _energy(grid, idx, u, cut_edges) -> float:
    region = grid.interior
    full = np.zeros(region.shape)
    full[region] = u
    e = 0.0
    both = region[:, :-1] & region[:, 1:]
    e += float(np.sum((full[:, :-1] - full[:, 1:])[both] ** 2))
    both = region[:-1, :] & region[1:, :]
    e += float(np.sum((full[:-1, :] - full[1:, :])[both] ** 2))
    for pi, w, g in cut_edges:
        e += float(np.sum(w * (u[pi] - g) ** 2))
    return e


@contextmanager
def _pinned_global_rng(seed: int = 0):
    # pyamg draws power-iteration start vectors from the global numpy RNG
    state = np.random.get_state()
    np.random.seed(seed)
    try:
        yield
    finally:
        np.random.set_state(state)


def _solve(region: AnnulusRegion, resolution: int, tol: float, swap: bool):
    grid, curves = discretize(region, resolution)
    interior = grid.interior
    if not grid.inside_inner.any() or not interior.any():
        raise ResolutionTooCoarse("inner or interior cell set is empty at this resolution", cell=grid.h)
    labels, ncomp = ndimage.label(interior)
    if ncomp > 1:
        raise Disconnected(f"interior splits into {ncomp} grid components", components=ncomp)
    A, rhs, idx, cut_edges = _assemble(grid, curves, swap)
    with _pinned_global_rng():
        ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
    iters = []
    u, info = cg(A, rhs, rtol=tol, maxiter=2000, M=ml.aspreconditioner(),
                 callback=lambda xk: iters.append(1))
    residual = float(np.linalg.norm(rhs - A @ u) / max(np.linalg.norm(rhs), 1e-300))
    if info != 0 and residual > 10 * tol:
        raise ModulusError(f"linear solve stalled at residual {residual:.2e}")
    return grid, _energy(grid, idx, u, cut_edges), residual, len(iters)


def estimate_modulus(region: AnnulusRegion, resolution: int = 512, tolerance: float = 1e-10,
                     refinement: Sequence[int] = (), delta: float = DEFAULT_DELTA,
                     narrow: str = "raise", swap: bool = False) -> ModulusEstimate:
    """Modulus of the region between ``region.inner`` and ``region.outer``.

    ``refinement`` lists extra (smaller) resolutions whose values go into
    the refinement history, finest last.  A boundary gap below ``delta`` is
    a pinch: the estimate is degenerate with value 0.  A gap narrower than
    three cells raises ResolutionTooCoarse, or is treated as a pinch when
    ``narrow == "degenerate"``.
    """
    outer = np.asarray(region.outer, dtype=complex)
    inner = np.asarray(region.inner, dtype=complex)
    pinches = list(region.pinch_points) or find_pinches(outer, inner, delta)
    gap = 0.0 if pinches else nested_gap(outer, inner)
    if pinches or gap < delta:
        return ModulusEstimate(value=0.0, resolution=resolution, residual=0.0, degenerate=True,
                               pinch_points=pinches, gap=gap)
    history = []
    result = None
    for n in sorted(set(refinement) | {resolution}):
        side = max(np.ptp(outer.real), np.ptp(outer.imag))
        h = side / (n - 5)
        if gap < 3 * h:
            if narrow == "degenerate":
                return ModulusEstimate(value=0.0, resolution=n, residual=0.0, degenerate=True,
                                       pinch_points=find_pinches(outer, inner, 3 * h), gap=gap,
                                       refinement_history=history)
            raise ResolutionTooCoarse(f"gap {gap:.3e} is under three cells of width {h:.3e}", gap=gap, cell=h)
        grid, energy, residual, its = _solve(region, n, tolerance, swap)
        value = 1.0 / energy
        history.append((n, value))
        if n == resolution:
            result = ModulusEstimate(value=value, resolution=n, residual=residual, gap=gap,
                                     energy=energy, iterations=its, uncertainty=value * grid.h / gap)
    result.refinement_history = history
    return result


def _same_curve(a, b, tol) -> bool:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape == b.shape and np.array_equal(a, b):
        return True
    from .puzzle import polyline_distance
    return bool(max(polyline_distance(a, b).max(), polyline_distance(b, a).max()) <= tol)


class _Cache:
    def __init__(self, **kw):
        self.kw = kw
        self.store = {}

    def __call__(self, region) -> ModulusEstimate:
        key = (np.asarray(region.outer).tobytes(), np.asarray(region.inner).tobytes())
        if key not in self.store:
            self.store[key] = estimate_modulus(region, **self.kw)
        return self.store[key]


def _check_chain(whole, parts, tol):
    if not parts:
        raise NotASubdivision("no parts")
    if not _same_curve(parts[0].outer, whole.outer, tol):
        raise NotASubdivision("first part does not share the outer boundary")
    if not _same_curve(parts[-1].inner, whole.inner, tol):
        raise NotASubdivision("last part does not share the inner boundary")
    for p, q in zip(parts, parts[1:]):
        if not _same_curve(p.inner, q.outer, tol):
            raise NotASubdivision("parts do not chain: inner curve of one is not the outer of the next")


def groetzsch_audit(whole: AnnulusRegion, parts: Sequence[AnnulusRegion], resolution: int = 512,
                    tol: float = 1e-9) -> tuple[float, float]:
    """(defect, solver epsilon).  Parts must chain from the outer boundary of
    ``whole`` to its inner boundary.  Epsilon is twice the summed
    discretization errors, each estimated by the change from half the
    resolution."""
    _check_chain(whole, parts, tol)
    est = _Cache(resolution=resolution, refinement=(resolution // 2,))
    mw = est(whole)
    mp = [est(p) for p in parts]
    defect = mw.value - sum(m.value for m in mp)
    eps = 2 * sum(discretization_error(m) for m in [mw] + mp)
    return defect, eps


def discretization_error(est: ModulusEstimate) -> float:
    """Change between the two finest resolutions in the history."""
    if est.degenerate:
        return 0.0
    if len(est.refinement_history) < 2:
        return est.uncertainty
    return abs(est.refinement_history[-1][1] - est.refinement_history[-2][1])


def groetzsch_defect(whole: AnnulusRegion, parts: Sequence[AnnulusRegion], resolution: int = 512) -> float:
    """mod(whole) minus the sum of the moduli of the parts."""
    return groetzsch_audit(whole, parts, resolution)[0]


@dataclass
class CoveringVerdict:
    mark: str
    ratio: float
    expected: str
    passed: bool
    parent: float
    child: float
    tolerance: float


def covering_ratio_check(parent: AnnulusRegion, child: AnnulusRegion, mark, resolution: int = 512,
                         tolerance: float = 0.05, parent_value: Optional[float] = None,
                         child_value: Optional[float] = None) -> CoveringVerdict:
    """Compare mod(parent) / mod(child) with what the mark predicts: 2 for
    a critical, 1 for an off-critical, below 2 for a semi-critical entry."""
    name = getattr(mark, "name", str(mark))
    mp = parent_value if parent_value is not None else estimate_modulus(parent, resolution).value
    mc = child_value if child_value is not None else estimate_modulus(child, resolution).value
    if mc == 0:
        raise ModulusError("child annulus is degenerate; ratio undefined")
    ratio = mp / mc
    key = name[0].upper()
    if key == "C":
        ok, exp = abs(ratio - 2) <= 2 * tolerance, "2"
    elif key == "O":
        ok, exp = abs(ratio - 1) <= tolerance, "1"
    elif key == "S":
        ok, exp = ratio < 2 * (1 + tolerance), "<2"
    else:
        raise ValueError(f"no modulus prediction for mark {name!r}")
    return CoveringVerdict(mark=name, ratio=ratio, expected=exp, passed=bool(ok), parent=mp, child=mc,
                           tolerance=tolerance)


def circle(center: complex, radius: float, samples: int = 2048) -> np.ndarray:
    t = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    return center + radius * np.exp(1j * t)


def round_annulus(r: float, R: float, center: complex = 0j, samples: int = 2048) -> AnnulusRegion:
    return AnnulusRegion(outer=circle(center, R, samples), inner=circle(center, r, samples))


def pinched_annulus(samples: int = 2048) -> AnnulusRegion:
    """Unit circle around a circle of radius 1/2 touching it at z = 1."""
    return AnnulusRegion(outer=circle(0j, 1.0, samples), inner=circle(0.5 + 0j, 0.5, samples))


def square(center: complex, half: float, per_side: int = 256) -> np.ndarray:
    t = np.linspace(-1, 1, per_side, endpoint=False)
    sides = [half * (1 + 1j * t), half * (1j - t), half * (-1 - 1j * t), half * (-1j + t)]
    return center + np.concatenate(sides)


def square_annulus(inner_half: float = 0.5, outer_half: float = 1.0, per_side: int = 256) -> AnnulusRegion:
    """Concentric axis-parallel squares."""
    return AnnulusRegion(outer=square(0j, outer_half, per_side), inner=square(0j, inner_half, per_side))
