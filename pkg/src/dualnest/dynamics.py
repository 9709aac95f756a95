"""The quadratic family f_c(z) = z**2 + c.

Evaluation, orbits, fixed points and the escape-rate (Green) function.
Functions accept scalars or numpy arrays where that is natural.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

# orbits are cut off here; past this radius the potential estimate is exact
# to far below double precision
BAILOUT = 1e100
LOG_BAILOUT = math.log(BAILOUT)


class DegenerateFixedPoint(ValueError):
    """Raised at c = 1/4, where the two fixed points collide."""


@dataclass(frozen=True)
class Parameter:
    c: complex
    limb: Optional[Fraction] = None

    def __post_init__(self):
        object.__setattr__(self, "c", complex(self.c))
        if self.limb is not None:
            limb = Fraction(self.limb)
            if not 0 < limb < 1 or limb.denominator < 2:
                raise ValueError(f"limb must be p/q in (0, 1) with q >= 2, got {limb}")
            object.__setattr__(self, "limb", limb)

    @property
    def escape_radius(self) -> float:
        return max(2.0, abs(self.c)) + 1.0


@dataclass(frozen=True)
class FixedPoints:
    alpha: complex
    beta: complex


@dataclass(frozen=True)
class OrbitSample:
    start: complex
    points: tuple

    def __len__(self):
        return len(self.points)

    def __getitem__(self, k):
        return self.points[k]


def evaluate(param: Parameter, z):
    return z * z + param.c


def fixed_points(param: Parameter, tol: float = 1e-12) -> FixedPoints:
    """Roots of z**2 - z + c.

    beta takes the principal square root, which picks the root landing the
    angle-0 ray everywhere off the real half-line c > 1/4.  The choice can be
    cross-checked by tracing that ray (see ``rays.check_beta``).
    """
    c = param.c
    disc = 1 - 4 * c
    if abs(disc) < tol:
        raise DegenerateFixedPoint("c = 1/4: the fixed points coincide")
    s = cmath.sqrt(disc)
    beta = (1 + s) / 2
    # the other root via Vieta keeps full relative accuracy when |alpha| is small
    alpha = c / beta
    return FixedPoints(alpha=_polish_fixed(c, alpha), beta=_polish_fixed(c, beta))


def _polish_fixed(c: complex, z: complex) -> complex:
    for _ in range(3):
        d = 2 * z - 1
        if d == 0:
            break
        z = z - (z * z - z + c) / d
    return z


def multiplier(param: Parameter, z: complex) -> complex:
    return 2 * z


def orbit(param: Parameter, z0: complex, length: int) -> OrbitSample:
    pts = [complex(z0)]
    z = complex(z0)
    for _ in range(length - 1):
        z = evaluate(param, z)
        pts.append(z)
    return OrbitSample(start=complex(z0), points=tuple(pts))


def critical_orbit(param: Parameter, length: int) -> OrbitSample:
    if length < 1:
        raise ValueError("length must be >= 1")
    return orbit(param, 0j, length)


def green_value(param: Parameter, z, n: int = 10_000):
    """Escape rate G(z) = lim 2**-k log|f^k(z)|.

    Orbits are followed until |z| > 1e100 or the budget ``n`` runs out.
    A point whose orbit is still inside the escape radius after ``n`` steps
    gets potential 0.  Vectorised over numpy arrays.
    """
    if n < 1:
        raise ValueError("iteration budget must be >= 1")
    scalar = np.isscalar(z)
    z = np.array(z, dtype=complex, ndmin=1).copy()
    c = param.c
    out = np.zeros(z.shape)
    k = np.zeros(z.shape, dtype=int)
    active = np.ones(z.shape, dtype=bool)
    done = np.abs(z) > BAILOUT
    active &= ~done
    for _ in range(n):
        if not active.any():
            break
        za = z[active]
        za = za * za + c
        z[active] = za
        k[active] += 1
        done = np.zeros(z.shape, dtype=bool)
        done[active] = np.abs(za) > BAILOUT
        active &= ~done
    r = param.escape_radius
    absz = np.abs(z)
    escaped = absz > r
    with np.errstate(divide="ignore"):
        out[escaped] = np.ldexp(np.log(absz[escaped]), -k[escaped])
    # a still-bounded orbit is treated as being on the filled Julia set
    out[~escaped] = 0.0
    return float(out[0]) if scalar else out.reshape(np.shape(z))


def escapes(param: Parameter, z, n: int = 1000):
    """True where the orbit leaves the escape radius within ``n`` steps."""
    z = np.array(z, dtype=complex, ndmin=1).copy()
    r = param.escape_radius
    out = np.abs(z) > r
    for _ in range(n):
        live = ~out
        if not live.any():
            break
        z[live] = z[live] ** 2 + param.c
        out[live] = np.abs(z[live]) > r
    return out
