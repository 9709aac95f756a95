"""External angles, external rays and equipotentials.

Angles are exact ``Fraction`` values in [0, 1).  Rays and equipotentials are
traced by Newton's method on f^n(z) = w, where w is the Boettcher image of
the target point pushed far enough out that the Boettcher map is the
identity to double precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .dynamics import Parameter, fixed_points, green_value

TWO_PI = 2 * math.pi
# Newton targets sit on |w| >= exp(LOG_R); the Boettcher correction there is
# O(|c| / R**2), far below the residuals we certify
LOG_R = math.log(1e5)
# tracing starts here, where z = w is already a good guess
START_POTENTIAL = 2 * LOG_R


class TraceDiverged(RuntimeError):
    """Newton refinement failed at some potential level."""

    def __init__(self, msg, angle=None, potential=None):
        super().__init__(msg)
        self.angle = angle
        self.potential = potential


class NotLanded(RuntimeError):
    pass


class NoCycle(ValueError):
    pass


def angle(x) -> Fraction:
    """Normalise anything Fraction accepts to an angle in [0, 1)."""
    a = Fraction(x)
    return a - math.floor(a)


def parse_angle(text: str) -> Fraction:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        if int(den) == 0:
            raise ValueError(f"zero denominator in angle {text!r}")
        return angle(Fraction(int(num), int(den)))
    return angle(Fraction(text))


def format_angle(a: Fraction) -> str:
    return f"{a.numerator}/{a.denominator}"


def double_angle(a: Fraction) -> Fraction:
    return angle(2 * a)


def preimage_angles(a: Fraction) -> tuple[Fraction, Fraction]:
    a = angle(a)
    return a / 2, a / 2 + Fraction(1, 2)


def doubling_orbit(a: Fraction, n: int) -> list[Fraction]:
    out = [angle(a)]
    for _ in range(n - 1):
        out.append(double_angle(out[-1]))
    return out


def angle_period(a: Fraction) -> tuple[int, int]:
    """(preperiod, period) of ``a`` under doubling."""
    seen = {}
    x = angle(a)
    k = 0
    while x not in seen:
        seen[x] = k
        x = double_angle(x)
        k += 1
    return seen[x], k - seen[x]


@dataclass(frozen=True)
class AngleCycle:
    angles: tuple
    rotation: Fraction

    def __iter__(self):
        return iter(self.angles)

    def __len__(self):
        return len(self.angles)


def _cycles_of_period(q: int) -> list[tuple]:
    den = 2**q - 1
    seen = set()
    cycles = []
    for k in range(den):
        a = Fraction(k, den)
        if a in seen:
            continue
        orb = doubling_orbit(a, q)
        seen.update(orb)
        if double_angle(orb[-1]) == a and len(set(orb)) == q:
            cycles.append(tuple(sorted(orb)))
    return cycles


def alpha_cycle(rotation) -> AngleCycle:
    """The period-q doubling cycle whose circular order rotates by p/q."""
    rot = Fraction(rotation)
    p, q = rot.numerator, rot.denominator
    if not 0 < rot < 1 or q < 2:
        raise NoCycle(f"rotation number must be p/q in (0, 1), q >= 2; got {rot}")
    for cyc in _cycles_of_period(q):
        pos = {a: i for i, a in enumerate(cyc)}
        if all(pos[double_angle(a)] == (i + p) % q for i, a in enumerate(cyc)):
            return AngleCycle(angles=cyc, rotation=rot)
    raise NoCycle(f"no doubling cycle with rotation number {rot}")


def _phase(a: Fraction, n: int) -> float:
    """frac(2**n * a) as a float, computed exactly."""
    return ((a.numerator * pow(2, n, a.denominator)) % a.denominator) / a.denominator


def _iterate_count(t: float) -> int:
    if t >= LOG_R:
        return 0
    return math.ceil(math.log2(LOG_R / t))


def trace_many(param: Parameter, angles: Sequence[Fraction], potentials: Sequence[float],
               z0: Optional[np.ndarray] = None, maxiter: int = 40):
    """Points of external rays at the given potentials.

    Returns a complex array of shape (len(potentials), len(angles)).  The
    potentials must be decreasing.  When ``z0`` is omitted tracing starts from
    START_POTENTIAL; levels further apart than 2**(1/8) are joined by
    unreported sub-steps, eight per halving.
    """
    out, failed = _trace(param, angles, potentials, z0, maxiter)
    if failed is not None:
        raise failed
    return out


def _trace(param, angles, potentials, z0=None, maxiter=40):
    """Like trace_many, but returns (samples, first failure or None) and
    keeps tracing the columns that did converge."""
    angles = [angle(a) for a in angles]
    potentials = np.asarray(potentials, dtype=float)
    if np.any(np.diff(potentials) >= 0) or potentials[-1] <= 0:
        raise ValueError("potentials must be positive and strictly decreasing")
    c = param.c
    bad = np.zeros(len(angles), dtype=bool)
    failure = None
    if z0 is None:
        t = START_POTENTIAL
        z = np.exp(t + 1j * TWO_PI * np.array([float(a) for a in angles]))
        for tl in _approach(t, potentials[0], 8):
            z, failure = _newton_level(c, angles, tl, z, maxiter, bad, failure)
    else:
        z = np.array(z0, dtype=complex)
    out = np.empty((len(potentials), len(angles)), dtype=complex)
    for i, t in enumerate(potentials):
        if i > 0:
            for tl in _approach(potentials[i - 1], t, 8):
                z, failure = _newton_level(c, angles, tl, z, maxiter, bad, failure)
        z, failure = _newton_level(c, angles, t, z, maxiter, bad, failure)
        out[i] = z
    out[:, bad] = np.nan
    return out, failure


def trace_many_robust(param: Parameter, angles: Sequence[Fraction], potentials: Sequence[float],
                      _depth: int = 0) -> np.ndarray:
    """trace_many, falling back ray by ray to pulling back the doubled ray.

    Near the critical point Newton on f^n(z) = w loses the branch; there
    z = sqrt(g(2t) - c) with g the ray of the doubled angle is well
    conditioned, and the root is picked by continuity from the first
    (high-potential) sample, where Newton is reliable.
    """
    angles = [angle(a) for a in angles]
    potentials = np.asarray(potentials, dtype=float)
    out, failure = _trace(param, angles, potentials)
    if failure is None:
        return out
    if _depth >= 8:
        raise failure
    for k in np.flatnonzero(np.isnan(out).any(axis=0)):
        a = angles[k]
        image = trace_many_robust(param, [double_angle(a)], 2 * potentials, _depth + 1)[:, 0]
        s = np.sqrt(image - param.c)
        prev = trace_many(param, [a], potentials[:1])[0, 0]
        for i, r in enumerate(s):
            out[i, k] = prev = r if abs(r - prev) <= abs(r + prev) else -r
    return out


def _approach(t_from: float, t_to: float, per_halving: int) -> list[float]:
    if t_to >= t_from:
        return []
    steps = math.ceil(per_halving * math.log2(t_from / t_to) - 1e-9)
    ks = np.arange(1, steps)
    return list(t_from * 2.0 ** (-ks / per_halving))


def _newton_level(c, angles, t, z, maxiter, bad, failure):
    """One Newton solve per column; columns that fail are flagged in
    ``bad`` and frozen."""
    n = _iterate_count(t)
    mag = math.ldexp(t, n)
    phases = np.array([_phase(a, n) for a in angles])
    w = np.exp(mag) * np.exp(1j * TWO_PI * phases)
    start = z
    z = z.copy()
    live = ~bad
    done = bad.copy()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(maxiter):
            fz = z.copy()
            dfz = np.ones_like(z)
            for _ in range(n):
                dfz = 2 * fz * dfz
                fz = fz * fz + c
            ratio = fz / w - 1
            step = (fz - w) / dfz
            z = z - step
            done |= (np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(z))) | (np.abs(ratio) < 1e-14)
            if done.all():
                break
        new_bad = live & ((~done & (np.abs(ratio) > 1e-10)) | ~np.isfinite(z))
    if new_bad.any():
        idx = int(np.flatnonzero(new_bad)[0])
        if failure is None:
            failure = TraceDiverged(f"Newton did not converge at potential {t:.3e} for angle {angles[idx]}",
                                    angle=angles[idx], potential=t)
        bad |= new_bad
    z[bad] = start[bad]
    return z, failure


def ray_potentials(from_potential: float, to_potential: float, per_halving: int) -> np.ndarray:
    """Geometric schedule t_k = from * 2**(-k/L), ending exactly at ``to``."""
    steps = math.ceil(per_halving * math.log2(from_potential / to_potential) - 1e-9)
    ks = np.arange(steps + 1)
    t = from_potential * 2.0 ** (-ks / per_halving)
    t[-1] = to_potential
    if steps >= 1 and t[-2] <= to_potential:
        t = np.delete(t, -2)
    return t


@dataclass
class ExternalRay:
    angle: Fraction
    samples: np.ndarray
    potentials: np.ndarray
    per_halving: int = 8
    landing: Optional[complex] = None
    matched_point: Optional[complex] = None


def trace_ray(param: Parameter, theta, from_potential: float = 1.0, to_potential: float = 1e-5,
              steps: int = 8) -> ExternalRay:
    """Trace the ray of angle ``theta`` between two potentials.

    ``steps`` is the number of samples per halving of the potential.
    Raises TraceDiverged when Newton fails; retrying with twice the steps is
    the usual remedy.
    """
    if not from_potential > to_potential > 0:
        raise ValueError("need from_potential > to_potential > 0")
    theta = angle(theta)
    t = ray_potentials(from_potential, to_potential, steps)
    z = trace_many(param, [theta], t)[:, 0]
    return ExternalRay(angle=theta, samples=z, potentials=t, per_halving=steps)


def trace_ray_robust(param, theta, from_potential=1.0, to_potential=1e-5, steps=8, retries=3):
    for k in range(retries + 1):
        try:
            return trace_ray(param, theta, from_potential, to_potential, steps * 2**k)
        except TraceDiverged:
            if k == retries:
                raise


def landing_point(ray: ExternalRay, param: Parameter, tol: float = 1e-4) -> complex:
    """Limit of the ray, by geometric extrapolation of its deepest samples.

    Samples spaced by one period of the angle (in halvings of the potential)
    approach a repelling landing point geometrically.  The extrapolated
    value is polished by Newton on the periodic-point equation when the
    angle is periodic, and recorded in ``ray.matched_point`` when the two
    agree within ``tol``.
    """
    if ray.potentials[-1] > 1e-5 * (1 + 1e-9):
        raise NotLanded("ray must be traced to potential <= 1e-5")
    pre, per = angle_period(ray.angle)
    stride = ray.per_halving * per
    # only samples on the geometric grid t0 * 2**(-k/L) are equally spaced
    t = ray.potentials
    k = -ray.per_halving * np.log2(t / t[0])
    on_grid = np.flatnonzero(np.abs(k - np.round(k)) < 1e-6)
    z = ray.samples
    idx = on_grid[::-1][::stride][:6][::-1]
    if len(idx) < 4:
        raise NotLanded("too few samples for extrapolation")
    seq = z[idx]
    limits = np.array([_wynn(seq[:j]) for j in range(len(seq) - 1, len(seq) + 1)])
    spread = abs(limits[-1] - limits[-2])
    scale = abs(seq[-1] - seq[-2]) + 1e-300
    if not np.isfinite(limits[-1]) or spread > max(tol, 0.5 * scale):
        raise NotLanded(f"ray {format_angle(ray.angle)} tail is not Cauchy (spread {spread:.2e})")
    land = complex(limits[-1])
    ray.landing = land
    ray.matched_point = None
    if pre == 0:
        cand = periodic_point_near(param, land, per)
        if cand is not None and abs(cand - land) < tol:
            ray.matched_point = cand
            ray.landing = cand
            land = cand
    return land


def _wynn(seq):
    """Wynn epsilon extrapolation; uses the highest even column available."""
    eps_prev = np.zeros(len(seq) + 1, dtype=complex)
    eps = np.array(seq, dtype=complex)
    best = eps[-1]
    col = 0
    while len(eps) > 1:
        diff = eps[1:] - eps[:-1]
        if np.any(diff == 0):
            break
        nxt = eps_prev[1:len(eps)] + 1.0 / diff
        eps_prev, eps = eps, nxt
        col += 1
        if col % 2 == 0:
            best = eps[-1]
    return complex(best)


def periodic_point_near(param: Parameter, z: complex, period: int, maxiter: int = 50):
    c = param.c
    for _ in range(maxiter):
        w, dw = z, 1.0 + 0j
        for _ in range(period):
            dw = 2 * w * dw
            w = w * w + c
        g, dg = w - z, dw - 1
        if dg == 0:
            return None
        step = g / dg
        z = z - step
        if abs(step) < 1e-15 * max(1.0, abs(z)):
            return z
    return z if abs(step) < 1e-10 else None


def check_beta(param: Parameter) -> complex:
    """beta from the quadratic formula, swapped if the angle-0 ray says so."""
    fp = fixed_points(param)
    ray = trace_ray(param, 0, 1.0, 1e-6)
    try:
        land = landing_point(ray, param)
    except NotLanded:
        return fp.beta
    if abs(land - fp.alpha) < abs(land - fp.beta):
        return fp.alpha
    return fp.beta


@dataclass
class Equipotential:
    level: float
    samples: np.ndarray
    angles: list = field(default_factory=list)


def trace_equipotential(param: Parameter, level: float, samples: int = 256) -> Equipotential:
    if level <= 0:
        raise ValueError("level must be positive")
    angles = [Fraction(k, samples) for k in range(samples)]
    z = trace_many(param, angles, [level])[0]
    return Equipotential(level=level, samples=z, angles=angles)


def green_residual(param: Parameter, z, potentials) -> np.ndarray:
    return np.abs(green_value(param, np.asarray(z)) - np.asarray(potentials))
