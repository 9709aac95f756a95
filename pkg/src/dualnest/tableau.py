"""Branner-Hubbard critical tableau.

Entry (d, j) records where z_j sits relative to the critical nest:
critical when z_j is in P_d(0), semi-critical when it is in P_{d-1}(0) but
not in P_d(0), off-critical otherwise.  P_{-1}(0) is the whole puzzle
domain {G <= r0}.  With annuli A_d(z) between the boundaries of P_{d-1}(z)
and P_d(z), entry (d, j) decides the degree of f on A_d(z_j): 2 and
unbranched for critical, 1 for off-critical.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import critical_orbit, green_value


class WindowTooShallow(RuntimeError):
    """The computed window cannot settle the question asked."""


class Mark(enum.Enum):
    CRITICAL = "C"
    SEMI_CRITICAL = "S"
    OFF_CRITICAL = "O"
    UNRESOLVABLE = "U"

    def __str__(self):
        return self.value


C, S, O, U = Mark.CRITICAL, Mark.SEMI_CRITICAL, Mark.OFF_CRITICAL, Mark.UNRESOLVABLE
_COLUMN = re.compile("C*S?O*")


def _mark(inside_d: Optional[bool], inside_prev: Optional[bool]) -> Mark:
    if inside_d is True:
        return C
    if inside_prev is False:
        return O
    if inside_d is None or inside_prev is None:
        return U
    return S


_LOOKUP = {m.value: m for m in Mark}


@dataclass
class Tableau:
    codes: np.ndarray  # '<U1' array of mark letters, shape (depths, width)
    source: str = ""
    orbit: Optional[Sequence[complex]] = None
    _links: Optional[dict] = field(default=None, repr=False, compare=False)

    @property
    def depths(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    def __getitem__(self, key) -> Mark:
        return _LOOKUP[str(self.codes[key])]

    @property
    def marks(self) -> np.ndarray:
        out = np.empty(self.codes.shape, dtype=object)
        for ch, m in _LOOKUP.items():
            out[self.codes == ch] = m
        return out

    def column(self, j: int) -> list:
        return [_LOOKUP[ch] for ch in self.codes[:, j]]

    def critical_depth(self, j: int) -> int:
        """Deepest d with (d, j) critical, reading down the leading run."""
        off = np.nonzero(self.codes[:, j] != "C")[0]
        return int(off[0]) - 1 if len(off) else self.depths - 1

    def unresolvable_fraction(self) -> float:
        return float(np.mean(self.codes == "U"))

    def rows(self) -> list[str]:
        return ["".join(row) for row in self.codes]

    def to_csv(self) -> str:
        head = "depth," + ",".join(str(j) for j in range(self.width))
        lines = [head] + [f"{d}," + ",".join(self.codes[d]) for d in range(self.depths)]
        return "\n".join(lines) + "\n"


def from_critical_depths(depths: Sequence[int], rows: int, source: str = "synthetic") -> Tableau:
    """Tableau determined by the critical depth of each column."""
    D = np.asarray(depths)[None, :]
    d = np.arange(rows)[:, None]
    codes = np.where(d <= D, "C", np.where(d == D + 1, "S", "O")).astype("<U1")
    return Tableau(codes=codes, source=source)


def from_rows(rows: Sequence[str], source: str = "rows") -> Tableau:
    codes = np.array([list(row) for row in rows], dtype="<U1")
    if not np.isin(codes, list(_LOOKUP)).all():
        raise ValueError("marks must be among C, S, O, U")
    return Tableau(codes=codes, source=source)


def membership_oracle(puzzle, width: int) -> tuple[Callable, Optional[list]]:
    """(d, j) -> z_j in P_d(0)?, for a geometric or a symbolic puzzle."""
    if hasattr(puzzle, "param"):
        orbit = list(critical_orbit(puzzle.param, width).points)
        with np.errstate(over="ignore", invalid="ignore"):
            greens = green_value(puzzle.param, np.array(orbit))
        cache = {}

        def member(d, j):
            if d < 0:
                return bool(greens[j] <= puzzle.r0)
            if d not in cache:
                cache[d] = puzzle.critical_membership_many(d, orbit, greens)
            return cache[d][j]

        return member, orbit
    return puzzle.critical_membership, None


def classify(puzzle, d: int, j: int, member: Optional[Callable] = None) -> Mark:
    if member is None:
        member, _ = membership_oracle(puzzle, j + 1)
    if j == 0:
        return C
    return _mark(member(d, j), member(d - 1, j))


def build_tableau(puzzle, depths: int, width: int) -> Tableau:
    """Marks for depths 0..depths-1 and orbit positions 0..width-1.

    Every cell is classified on its own, so the column rule is a genuine
    check on the puzzle rather than a consequence of the construction.
    """
    member, orbit = membership_oracle(puzzle, width)
    codes = np.empty((depths, width), dtype="<U1")
    for d in range(depths):
        for j in range(width):
            codes[d, j] = classify(puzzle, d, j, member).value
    name = f"c={puzzle.param.c}" if hasattr(puzzle, "param") else "symbolic"
    return Tableau(codes=codes, source=name, orbit=orbit)


def column_rule_violations(t: Tableau) -> list[int]:
    """Columns that do not read C..C, at most one S, then O..O downward.
    Unresolvable entries are skipped."""
    return [j for j in range(t.width)
            if not _COLUMN.fullmatch("".join(t.codes[:, j]).replace("U", ""))]


@dataclass
class RecurrenceVerdict:
    recurrent_so_far: bool
    witnesses: list
    critical_depths: list
    window: tuple

    def to_dict(self) -> dict:
        return {"verdict": "recurrent-so-far" if self.recurrent_so_far else "bounded-in-window",
                "witnesses": [list(w) for w in self.witnesses],
                "critical_depths": self.critical_depths,
                "window": {"depths": self.window[0], "width": self.window[1]}}


@dataclass
class PeriodicityVerdict:
    periodic: bool
    columns: list
    window: tuple

    def to_dict(self) -> dict:
        return {"verdict": "periodic-in-window" if self.periodic else "aperiodic-in-window",
                "columns": self.columns,
                "window": {"depths": self.window[0], "width": self.window[1]}}


def is_recurrent(t: Tableau) -> RecurrenceVerdict:
    """Critical depths over columns k > 0 and their running records.

    The verdict is recurrent-so-far when some column k > 0 reaches the
    deepest computed row, i.e. the window shows no bound on the critical
    depths.  Nothing is claimed beyond the window.
    """
    notc = t.codes != "C"
    first = np.where(notc.any(axis=0), notc.argmax(axis=0), t.depths)
    depths = [int(x) - 1 for x in first]
    records = []
    best = -2
    for k in range(1, t.width):
        if depths[k] > best:
            best = depths[k]
            records.append((k, depths[k]))
    hit = best >= t.depths - 1
    return RecurrenceVerdict(recurrent_so_far=hit, witnesses=records, critical_depths=depths,
                             window=(t.depths, t.width))


def is_periodic(t: Tableau) -> PeriodicityVerdict:
    cols = [k for k in range(1, t.width) if (t.codes[:, k] == "C").all()]
    return PeriodicityVerdict(periodic=bool(cols), columns=cols, window=(t.depths, t.width))


@dataclass(frozen=True)
class ChildLink:
    child: tuple  # (depth, column) of the child annulus A_d(0)
    parent: tuple
    iterate: int
    degree: int = 2
    conditional: bool = False

    def to_dict(self) -> dict:
        return {"child": list(self.child), "parent": list(self.parent), "iterate": self.iterate,
                "degree": self.degree, "conditional": self.conditional}


def child_iterate(t: Tableau, depth: int) -> Optional[tuple[int, bool]]:
    """(n, conditional) with f^n: A_depth(0) -> A_{depth-n}(0) a degree-2
    covering, or None when A_depth(0) is no child within the window.

    A_{d+n}(0) is a child of A_d(0) iff (d, n) is critical and the entries
    (d+n-k, k) for 0 < k < n are off-critical.  At most one n qualifies, so
    the scan stops at the first entry that is not off-critical.
    Unresolvable entries are read as off-critical and make the link
    conditional.
    """
    cond = False
    for n in range(1, min(depth, t.width - 1) + 1):
        m = t.codes[depth - n, n]
        if m == "O":
            continue
        if m == "U":
            cond = True
            continue
        return (n, cond) if m == "C" else None
    return None


def parent_links(t: Tableau) -> dict:
    """depth -> (iterate, conditional) for every child depth in the window."""
    if t._links is None:
        t._links = {}
        for dd in range(1, t.depths):
            hit = child_iterate(t, dd)
            if hit is not None:
                t._links[dd] = hit
    return t._links


def children_of(t: Tableau, d: int, puzzle=None) -> list[ChildLink]:
    """Children of A_d(0) inside the window, smallest iterate first."""
    if not 0 <= d < t.depths:
        raise WindowTooShallow(f"depth {d} is outside the window of {t.depths} rows")
    links = parent_links(t)
    return [ChildLink(child=(dd, 0), parent=(d, 0), iterate=links[dd][0], conditional=links[dd][1])
            for dd in range(d + 1, t.depths) if dd in links and dd - links[dd][0] == d]


def is_excellent(t: Tableau, link: ChildLink, puzzle=None) -> bool:
    """True when the child has at least two children in the window.

    Fewer than two is never reported as False: a later child may lie
    beyond the window, so WindowTooShallow is raised instead.
    """
    kids = children_of(t, link.child[0])
    if len(kids) >= 2:
        return True
    raise WindowTooShallow(f"A_{link.child[0]}(0) has {len(kids)} child(ren) within "
                           f"{t.depths} x {t.width}; cannot certify excellence")
