"""Exact puzzle combinatorics on the circle of external angles.

A depth-d puzzle piece is recorded by the arcs of angles whose rays enter
it just below the depth-d equipotential.  Landing groups (sets of angles
whose rays share a landing point) are pulled back with the diameter through
the two preimages of the critical-value angle, which separates the two
preimages of every non-critical landing point.
"""
from __future__ import annotations

import bisect
import math
from fractions import Fraction

import numpy as np
from functools import lru_cache
from typing import Optional

from .rays import AngleCycle, alpha_cycle, angle, double_angle, preimage_angles

HALF = Fraction(1, 2)


def arc_length(a: Fraction, b: Fraction) -> Fraction:
    return (b - a) % 1 if b != a else Fraction(1)


def in_arc(x: Fraction, a: Fraction, b: Fraction) -> bool:
    """x strictly inside the counter-clockwise arc from a to b."""
    if a == b:
        return x != a
    return 0 < (x - a) % 1 < (b - a) % 1


def pieces_from_groups(sorted_angles: list, group_of: dict) -> list[list[tuple]]:
    """Group the arcs between consecutive angles into puzzle pieces.

    From the end point of an arc, the boundary runs down the ray to its
    landing point and comes back up along the previous ray of the same
    landing group, where the next arc of the piece starts.
    """
    n = len(sorted_angles)
    index = {a: i for i, a in enumerate(sorted_angles)}
    pred = {}
    for g in {id(g): g for g in group_of.values()}.values():
        gs = sorted(g)
        for k, a in enumerate(gs):
            pred[a] = gs[k - 1]
    seen = [False] * n
    pieces = []
    for i in range(n):
        if seen[i]:
            continue
        arcs = []
        j = i
        while not seen[j]:
            seen[j] = True
            a, b = sorted_angles[j], sorted_angles[(j + 1) % n]
            arcs.append((a, b))
            j = index[pred[b]]
        if j != i:
            raise ValueError("landing groups do not define a planar partition")
        pieces.append(arcs)
    return pieces


class SymbolicPuzzle:
    """Puzzle combinatorics for the parameter whose critical value has
    external angle ``critical_angle`` inside the wake of the given limb.

    Deep queries run on integers: an angle x is stored as x * Q with
    Q = lcm(2**q - 1, odd part of its denominator) * 2**bits, which is exact for every boundary angle of
    depth below ``bits`` and for the critical orbit angles.
    """

    def __init__(self, rotation, critical_angle, bits: int = 0):
        self.cycle: AngleCycle = alpha_cycle(rotation)
        self.critical_angle = angle(critical_angle)
        if self.critical_angle in self.cycle.angles:
            raise ValueError("critical value angle lies on the alpha cycle")
        a, b = preimage_angles(self.critical_angle)
        self.cut = (a, b)
        self._groups = [[frozenset(self.cycle.angles)]]
        q = len(self.cycle)
        den = self.critical_angle.denominator
        two = (den & -den).bit_length() - 1
        self.bits = max(bits, two + 2, 64)
        self.Q = math.lcm(2**q - 1, den >> two) * 2**self.bits
        self._icut = (self._int(a), self._int(b))
        self._icrit = self._int(self.critical_angle)
        self._icycle = sorted(self._int(x) for x in self.cycle.angles)
        self._piece_cache = {}

    def _int(self, x: Fraction) -> int:
        v = angle(x) * self.Q
        if v.denominator != 1:
            raise ValueError(f"angle {x} is not representable with {self.bits} bits")
        return int(v)

    def _frac(self, v: int) -> Fraction:
        return Fraction(v, self.Q)

    def _in(self, x: int, a: int, b: int) -> bool:
        if a == b:
            return x != a
        Q = self.Q
        return 0 < (x - a) % Q < (b - a) % Q

    # -- landing groups ---------------------------------------------------
    def _side(self, x: Fraction) -> int:
        a, b = self.cut
        if x == a or x == b:
            raise ValueError("angle on the critical diameter")
        return 1 if in_arc(x, a, b) else 0

    def pull_back_group(self, group) -> list[frozenset]:
        halves = ([], [])
        for g in group:
            for x in preimage_angles(g):
                halves[self._side(x)].append(x)
        return [frozenset(h) for h in halves]

    def groups(self, depth: int) -> list[frozenset]:
        """Landing groups that first appear at ``depth``."""
        while len(self._groups) <= depth:
            old = set().union(*[set().union(*gs) for gs in self._groups])
            new = []
            for g in self._groups[-1]:
                for h in self.pull_back_group(g):
                    if not h <= old:
                        new.append(h)
            self._groups.append(new)
        return self._groups[depth]

    def all_groups(self, depth: int) -> list[frozenset]:
        return [g for d in range(depth + 1) for g in self.groups(d)]

    def boundary_angles(self, depth: int) -> list[Fraction]:
        return sorted(set().union(*self.all_groups(depth)))

    def pieces(self, depth: int) -> list[list[tuple]]:
        groups = self.all_groups(depth)
        group_of = {a: g for g in groups for a in g}
        return pieces_from_groups(sorted(group_of), group_of)

    # -- pieces by recursion, no enumeration -----------------------------
    def _ipiece(self, depth: int, x: int) -> tuple:
        key = (depth, x)
        hit = self._piece_cache.get(key)
        if hit is not None:
            return hit
        Q = self.Q
        if depth >= self.bits:
            raise ValueError(f"depth {depth} needs more than {self.bits} bits")
        # walk down to the deepest cached ancestor, then back up iteratively
        chain = []
        d, y = depth, x
        while d >= 0 and (d, y) not in self._piece_cache:
            chain.append((d, y))
            d, y = d - 1, 2 * y % Q
        for d, y in reversed(chain):
            if d == 0:
                cyc = self._icycle
                for k, a in enumerate(cyc):
                    b = cyc[(k + 1) % len(cyc)]
                    if self._in(y, a, b):
                        arcs = ((a, b),)
                        break
                else:
                    raise ValueError(f"angle {self._frac(y)} lies on a depth-0 ray")
            else:
                image = self._piece_cache[(d - 1, 2 * y % Q)]
                lifted = []
                for a, b in image:
                    ln = ((b - a) % Q or Q) // 2
                    for a2 in (a // 2, a // 2 + Q // 2):
                        lifted.append((a2, (a2 + ln) % Q))
                if any(self._in(self._icrit, a, b) for a, b in image):
                    arcs = tuple(sorted(lifted))
                else:
                    c0, c1 = self._icut
                    side = self._in(y, c0, c1)
                    arcs = tuple(sorted(arc for arc in lifted
                                        if self._in((arc[0] + ((arc[1] - arc[0]) % Q) // 2) % Q, c0, c1) == side))
                if not any(self._in(y, a, b) for a, b in arcs):
                    raise ValueError(f"angle {self._frac(y)} lies on a depth-{d} ray")
            self._piece_cache[(d, y)] = arcs
        return self._piece_cache[key]

    def piece_of_angle(self, depth: int, x: Fraction) -> tuple:
        """Arcs of the depth-``depth`` piece entered by the ray at ``x``."""
        arcs = self._ipiece(depth, self._int(x))
        return tuple((self._frac(a), self._frac(b)) for a, b in arcs)

    def contains(self, arcs, x: Fraction) -> bool:
        return any(in_arc(x, a, b) for a, b in arcs)

    def critical_piece(self, depth: int) -> tuple:
        return self.piece_of_angle(depth, self.cut[0])

    def orbit_angle(self, j: int) -> Fraction:
        """External angle of the critical orbit point z_j (z_0 = 0 uses one
        of its two angles)."""
        if j == 0:
            return self.cut[0]
        return angle(self.critical_angle * pow(2, j - 1))

    def _iorbit(self, j: int) -> int:
        if j == 0:
            return self._icut[0]
        return self._icrit * pow(2, j - 1, self.Q) % self.Q

    def critical_membership(self, depth: int, j: int) -> Optional[bool]:
        """Is z_j in P_depth(0)?  None when z_j sits on a boundary ray."""
        if depth < 0:
            return True
        try:
            arcs = self._ipiece(depth, self._icut[0])
        except ValueError:
            return None
        x = self._iorbit(j)
        for a, b in arcs:
            if x == a or x == b:
                return None
        return any(self._in(x, a, b) for a, b in arcs)

    def critical_depth(self, j: int, cap: int) -> int:
        """Largest d <= cap with z_j in P_d(0); -1 if not even in P_0(0)."""
        d = -1
        while d < cap and self.critical_membership(d + 1, j):
            d += 1
        return d

    # -- critical depths of the whole orbit at once -----------------------
    def critical_depths(self, width: int, cap: int) -> list[int]:
        """critical_depth(k, cap) for k < width, without building pieces.

        Let G(a, b) be the deepest level at which the rays of x_a and x_b
        (orbit angles, x_0 the angle of 0) enter one piece.  Lifting pieces
        gives G(a, b) = min(G(a+1, b+1), G(a+1, 1) if x_a, x_b lie on
        opposite sides of the critical diameter) + 1, and -1 when the two
        are already apart at depth 0.  Along a diagonal a - b = const this
        is a min-plus scan; diagonals are processed in decreasing order so
        that every G(a+1, 1) needed is already known.
        """
        n = width + cap + 2
        cyc = sorted(self.cycle.angles)
        xs = [self.cut[0]] + [self.orbit_angle(i) for i in range(1, n + 1)]
        c0, c1 = self.cut
        sector = np.array([sum(1 for a in cyc if a < x) % len(cyc) for x in xs])
        side = np.array([in_arc(x, c0, c1) for x in xs])
        if any(x in self.cycle.angles or x in self.cut for x in xs[1:]):
            raise ValueError("an orbit angle lies on a depth-0 ray or on the critical diameter")
        big = cap + n + 2
        row1 = np.full(n + 2, big, dtype=np.int64)  # row1[a] = G(a, 1)
        for delta in range(n - 1, 0, -1):
            b = np.arange(1, n - delta + 1)
            a = b + delta
            nxt = np.where(a + 1 <= n, row1[np.minimum(a + 1, n + 1)] + 1, big)
            h = np.where(side[a] != side[b], nxt, big)
            h = np.where(sector[a] != sector[b], -1, h)
            # G_b = min(G_{b+1} + 1, h_b), G past the end = big
            end = len(b)
            vals = np.minimum.accumulate((h + b)[::-1])[::-1] - b
            vals = np.minimum(vals, big + (end + 1 - b))
            row1[delta + 1] = vals[0]
        out = [cap]
        for k in range(1, width):
            g = -1 if sector[k] != sector[0] else int(row1[k + 1]) + 1
            out.append(min(g, cap))
        return out
