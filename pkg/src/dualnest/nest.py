"""Descendant trees of critical annuli, the dual nest of complementary
annuli, ancestor pullbacks and the divergence bookkeeping.

Nodes are critical annuli A_d(0) indexed by depth d.  A node maps onto its
parent by the iterate read off the tableau, as an unbranched degree-2
covering, so a node of generation i covers the root with degree 2**i.
Sorting the tree by depth gives the a-nested sequence A_0, A_1, ...; the
complementary annulus alpha_j lies between A_j and A_{j+2} with middle
annulus A_{j+1}.

Synthetic mode takes its tree from exact lamination combinatorics and
plants exact rational moduli; geometric mode takes it from a computed
puzzle and measures moduli numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .tableau import Tableau, WindowTooShallow, children_of, from_critical_depths, parent_links

Number = Union[Fraction, float]

ONESTEP = "Lemma onestep"
MANYSTEPS = "Corollary manysteps"
COVERING = "Lemma covering"
BATCH = "batch bound"


class NestError(RuntimeError):
    pass


class NotExcellent(WindowTooShallow):
    """The root does not show two children inside the window."""


class NotANest(NestError):
    pass


class ChainUnknown(NestError):
    pass


class IntermediateGenerationTooLow(NestError):
    def __init__(self, msg, generation=None):
        super().__init__(msg)
        self.generation = generation


class EmptyInput(NestError, ValueError):
    pass


class InsufficientDepth(NestError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class InvalidSpec(NestError, ValueError):
    pass


@dataclass(eq=False)
class DescendantNode:
    generation: int
    index: int  # position inside its generation, by depth
    annulus: int  # depth d of A_d(0)
    iterate_to_root: int
    degenerate: bool = False
    children: list = field(default_factory=list)
    parent: Optional["DescendantNode"] = field(default=None, repr=False)
    iterate: int = 0  # f**iterate maps this node onto its parent
    conditional: bool = False
    modulus: Optional[Number] = None
    region: object = field(default=None, repr=False)
    position: int = -1  # index in the a-nested sequence

    @property
    def depth(self) -> int:
        return self.annulus

    @property
    def covering_degree(self) -> int:
        return 2 ** self.generation

    def walk(self) -> Iterator["DescendantNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def path_to_root(self) -> list["DescendantNode"]:
        out = [self]
        while out[-1].parent is not None:
            out.append(out[-1].parent)
        return out

    def to_dict(self) -> dict:
        return {"depth": self.annulus, "generation": self.generation, "index": self.index,
                "position": self.position, "iterate": self.iterate, "iterate_to_root": self.iterate_to_root,
                "covering_degree": self.covering_degree, "degenerate": self.degenerate,
                "conditional": self.conditional, "parent": None if self.parent is None else self.parent.annulus,
                "children": [c.annulus for c in self.children], "modulus": _num(self.modulus)}


@dataclass(eq=False)
class AncestorLink:
    offspring: "ComplementaryAnnulus"
    ancestor: "ComplementaryAnnulus"
    iterates: tuple  # k, k_1, ..., k_{m-1} along the outer chain
    pullback_steps: int
    middle_degree: Optional[int]

    @property
    def factor(self) -> Fraction:
        return Fraction(1, 2 ** self.pullback_steps)

    def to_dict(self) -> dict:
        return {"from": self.offspring.index, "to": self.ancestor.index, "iterates": list(self.iterates),
                "pullback_steps": self.pullback_steps, "middle_degree": self.middle_degree,
                "factor": _num(self.factor)}


@dataclass(eq=False)
class ComplementaryAnnulus:
    index: int  # j: between A_j and A_{j+2}
    outer_annulus: DescendantNode
    middle_annulus: DescendantNode
    inner_annulus: DescendantNode
    modulus: Optional[Number] = None
    region: object = field(default=None, repr=False)
    ancestor: Optional[AncestorLink] = None
    offspring_iterate: Optional[int] = None
    family: Optional["Nest"] = field(default=None, repr=False)

    @property
    def outer_generation(self) -> int:
        return self.outer_annulus.generation

    @property
    def inner_generation(self) -> int:
        return self.inner_annulus.generation

    @property
    def intermediate_generation(self) -> Optional[int]:
        try:
            return intermediate_generation(self)
        except ChainUnknown:
            return None

    def overlaps(self, other: "ComplementaryAnnulus") -> bool:
        return abs(self.index - other.index) < 2

    @property
    def label(self) -> str:
        return f"alpha[{self.index}] n={self.inner_generation} m={self.outer_generation}"

    def to_dict(self) -> dict:
        return {"index": self.index,
                "outer": self.outer_annulus.annulus, "middle": self.middle_annulus.annulus,
                "inner": self.inner_annulus.annulus,
                "outer_generation": self.outer_generation, "inner_generation": self.inner_generation,
                "intermediate_generation": self.intermediate_generation,
                "modulus": _num(self.modulus),
                "ancestor": None if self.ancestor is None else self.ancestor.to_dict()}


@dataclass(eq=False)
class Nest:
    root: DescendantNode
    sequence: list
    annuli: list
    window: tuple
    mode: str = "synthetic"
    planted: dict = field(default_factory=dict)

    def __post_init__(self):
        self.by_depth = {n.annulus: n for n in self.sequence}
        self._keys = None
        for a in self.annuli:
            a.family = self

    def generation_counts(self) -> dict:
        out = {}
        for n in self.sequence:
            out[n.generation] = out.get(n.generation, 0) + 1
        return dict(sorted(out.items()))

    @property
    def achieved_generation(self) -> int:
        return max(n.generation for n in self.sequence)

    def keys(self) -> np.ndarray:
        """(outer depth, middle depth, inner depth, inner generation) rows."""
        if self._keys is None:
            self._keys = np.array([[a.outer_annulus.annulus, a.middle_annulus.annulus,
                                    a.inner_annulus.annulus, a.inner_generation] for a in self.annuli],
                                  dtype=np.int64).reshape(-1, 4)
        return self._keys

    def to_dict(self) -> dict:
        return {"mode": self.mode, "window": {"depths": self.window[0], "width": self.window[1]},
                "root": self.root.annulus, "achieved_generation": self.achieved_generation,
                "generation_counts": {str(k): v for k, v in self.generation_counts().items()},
                "tree": [n.to_dict() for n in self.sequence],
                "complementary_annuli": [a.to_dict() for a in self.annuli],
                "planted": self.planted}


def _num(x):
    if x is None:
        return None
    if isinstance(x, Fraction):
        return {"exact": f"{x.numerator}/{x.denominator}", "value": float(x)}
    return float(x)


# -- tree -------------------------------------------------------------------

def descendant_tree(root: int, generations: Optional[int], source: Tableau,
                    require_excellent: bool = True) -> DescendantNode:
    """Tree of descendants of A_root(0) read off a tableau.

    With ``generations`` None the tree holds every descendant inside the
    window.  A requested generation that the window does not reach raises
    WindowTooShallow.
    """
    if not 0 <= root < source.depths:
        raise WindowTooShallow(f"root depth {root} is outside the window of {source.depths} rows")
    kids = children_of(source, root)
    if require_excellent and len(kids) < 2:
        raise NotExcellent(f"A_{root}(0) shows {len(kids)} child(ren) in a {source.depths} x "
                           f"{source.width} window")
    links = parent_links(source)
    below = {}
    for dd, (n, cond) in links.items():
        below.setdefault(dd - n, []).append((dd, n, cond))
    top = DescendantNode(generation=0, index=0, annulus=root, iterate_to_root=0)
    level = [top]
    g = 0
    while level and (generations is None or g < generations):
        nxt = []
        for node in level:
            for dd, n, cond in below.get(node.annulus, []):
                child = DescendantNode(generation=g + 1, index=0, annulus=dd,
                                       iterate_to_root=node.iterate_to_root + n, parent=node,
                                       iterate=n, conditional=cond or node.conditional)
                node.children.append(child)
                nxt.append(child)
        nxt.sort(key=lambda c: c.annulus)
        for i, c in enumerate(nxt):
            c.index = i
        level = nxt
        g += 1
    if generations is not None and g < generations:
        raise WindowTooShallow(f"the window reaches generation {g - 1}, not {generations}")
    return top


def nest_sequence(root: DescendantNode) -> list[DescendantNode]:
    """The a-nested sequence: every node of the tree, outermost first."""
    seq = sorted(root.walk(), key=lambda n: n.annulus)
    for i, n in enumerate(seq):
        n.position = i
    return seq


def complementary_annuli(sequence: Sequence[DescendantNode]) -> list[ComplementaryAnnulus]:
    """alpha_j between A_j and A_{j+2}, middle annulus A_{j+1}.

    The sequence must be strictly nested (increasing depth) and Markov:
    every member but the first maps onto an earlier member.
    """
    depths = [n.annulus for n in sequence]
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise NotANest("annuli are not strictly nested")
    members = set(map(id, sequence))
    for n in sequence[1:]:
        if n.parent is None or id(n.parent) not in members:
            raise NotANest(f"A_{n.annulus}(0) does not map onto a member of the sequence")
    for i, n in enumerate(sequence):
        n.position = i
    return [ComplementaryAnnulus(index=j, outer_annulus=sequence[j], middle_annulus=sequence[j + 1],
                                 inner_annulus=sequence[j + 2]) for j in range(len(sequence) - 2)]


def build_nest(root: int, source: Tableau, generations: Optional[int] = None, mode: str = "synthetic",
               require_excellent: bool = True) -> Nest:
    top = descendant_tree(root, generations, source, require_excellent)
    seq = nest_sequence(top)
    return Nest(root=top, sequence=seq, annuli=complementary_annuli(seq),
                window=(source.depths, source.width), mode=mode)


# -- pullback bookkeeping ---------------------------------------------------

def _offspring_iterate(alpha: ComplementaryAnnulus) -> int:
    if alpha.offspring_iterate is not None:
        return alpha.offspring_iterate
    if alpha.inner_annulus.parent is None:
        raise ChainUnknown(f"{alpha.label}: inner annulus has no parent")
    return alpha.inner_annulus.iterate


def intermediate_generation(alpha: ComplementaryAnnulus) -> int:
    """Generation of R, the image of the middle annulus under the iterate
    taking the inner annulus to its parent.  Negative when R encloses the
    root of the tree."""
    K = _offspring_iterate(alpha)
    if K == 0:
        return alpha.middle_annulus.generation
    if alpha.family is None:
        raise ChainUnknown(f"{alpha.label}: no tree to match the image against")
    r = alpha.middle_annulus.annulus - K
    if r < alpha.family.root.annulus:
        return -1
    node = alpha.family.by_depth.get(r)
    if node is None:
        raise ChainUnknown(f"{alpha.label}: image A_{r}(0) of the middle annulus is not in the tree")
    return node.generation


def ancestor_of(alpha: ComplementaryAnnulus) -> AncestorLink:
    """The unique complementary annulus onto which alpha maps, found by
    searching every complementary annulus of the nest."""
    n_mid = intermediate_generation(alpha)
    if n_mid < 1:
        raise IntermediateGenerationTooLow(f"{alpha.label}: intermediate generation {n_mid}", n_mid)
    K = _offspring_iterate(alpha)
    fam = alpha.family
    target = np.array([alpha.outer_annulus.annulus - K, alpha.middle_annulus.annulus - K,
                       alpha.inner_annulus.parent.annulus, alpha.inner_generation - 1])
    hits = np.nonzero((fam.keys() == target).all(axis=1))[0]
    if len(hits) == 0:
        raise ChainUnknown(f"{alpha.label}: no complementary annulus bounded by the images")
    if len(hits) > 1:
        raise NotANest(f"{alpha.label}: {len(hits)} candidate ancestors")
    beta = fam.annuli[int(hits[0])]
    # outer chain P_m -> ... -> P, one child step at a time
    iterates = []
    node = alpha.outer_annulus
    while node.annulus > beta.outer_annulus.annulus and node.parent is not None:
        iterates.append(node.iterate)
        node = node.parent
    if node is not beta.outer_annulus or sum(iterates) != K:
        raise ChainUnknown(f"{alpha.label}: outer annulus does not pull back along the tree")
    steps = len(iterates)
    D = 2 ** (alpha.middle_annulus.generation - n_mid)
    return AncestorLink(offspring=alpha, ancestor=beta, iterates=tuple(reversed(iterates)),
                        pullback_steps=steps, middle_degree=D)


def _link(alpha: ComplementaryAnnulus) -> AncestorLink:
    if alpha.ancestor is None:
        alpha.ancestor = ancestor_of(alpha)
    return alpha.ancestor


def grand_ancestor(alpha: ComplementaryAnnulus) -> tuple[ComplementaryAnnulus, Fraction]:
    """Follow ancestors until the intermediate generation drops below 1.
    Returns the last annulus and the product of the step factors."""
    link = _link(alpha)
    factor = link.factor
    cur = link.ancestor
    while True:
        try:
            link = _link(cur)
        except IntermediateGenerationTooLow:
            return cur, factor
        factor *= link.factor
        cur = link.ancestor


# -- accounting -------------------------------------------------------------

def select_nonoverlapping(annuli: Sequence[ComplementaryAnnulus]) -> tuple[str, list]:
    """Keep the annuli whose inner annulus A_{j+2} has the majority parity
    of j + 2 (ties go to Even).  Equal parity means indices differ by at
    least 2, so the kept annuli are pairwise disjoint."""
    if not annuli:
        raise EmptyInput("no annuli to select from")
    if len({a.outer_generation for a in annuli}) > 1:
        raise ValueError("annuli must share one outer generation")
    even = [a for a in annuli if (a.index + 2) % 2 == 0]
    odd = [a for a in annuli if (a.index + 2) % 2 == 1]
    return ("Even", even) if len(even) >= len(odd) else ("Odd", odd)


@dataclass
class Batch:
    outer_generation: int
    parity: str
    selected: list
    batch_sum: Number
    count: int  # complementary annuli of this outer generation in the window

    @property
    def complete(self) -> bool:
        return self.count >= 2 ** self.outer_generation

    def to_dict(self) -> dict:
        return {"outer_generation": self.outer_generation, "parity": self.parity,
                "selected": [a.index for a in self.selected], "batch_sum": _num(self.batch_sum),
                "annuli_in_window": self.count, "complete": self.complete}


@dataclass
class Violation:
    inequality: str
    where: str
    lhs: Number
    rhs: Number

    def to_dict(self) -> dict:
        return {"inequality": self.inequality, "where": self.where, "lhs": _num(self.lhs), "rhs": _num(self.rhs)}


@dataclass
class DivergenceReport:
    M0: Optional[Number]
    m0: Optional[int]
    batches: list
    running_total: Number
    requested: int
    achieved_generation: int
    violations: list = field(default_factory=list)
    exact: bool = True

    @property
    def parity(self) -> str:
        kinds = {b.parity for b in self.batches}
        return kinds.pop() if len(kinds) == 1 else ("Mixed" if kinds else "none")

    @property
    def ok(self) -> bool:
        return not self.violations and len(self.batches) >= self.requested

    def to_dict(self) -> dict:
        return {"M0": _num(self.M0), "m0": self.m0, "parity": self.parity, "exact": self.exact,
                "batches": [b.to_dict() for b in self.batches], "running_total": _num(self.running_total),
                "bound": _num(self.M0 * len(self.batches) / 2) if self.M0 is not None else None,
                "requested_batches": self.requested, "achieved_batches": len(self.batches),
                "achieved_generation": self.achieved_generation,
                "violations": [v.to_dict() for v in self.violations]}


def _below(a, b, tol) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a < b
    return float(a) < float(b) * (1 - tol) - tol


def check_inequalities(nest: Nest, tol: float = 0.0) -> list[Violation]:
    """Every offspring against its ancestor, every annulus against its grand
    ancestor, and every child annulus against its parent."""
    out = []
    for a in nest.annuli:
        if a.modulus is None:
            continue
        try:
            link = _link(a)
        except (IntermediateGenerationTooLow, ChainUnknown):
            continue
        b = link.ancestor
        if b.modulus is not None and _below(a.modulus, link.factor * b.modulus, tol):
            out.append(Violation(ONESTEP, a.label, a.modulus, link.factor * b.modulus))
        try:
            g, f = grand_ancestor(a)
        except (IntermediateGenerationTooLow, ChainUnknown):
            continue
        if g.modulus is not None and _below(a.modulus, f * g.modulus, tol):
            out.append(Violation(MANYSTEPS, a.label, a.modulus, f * g.modulus))
    for n in nest.sequence:
        if n.parent is None or n.modulus is None or n.parent.modulus is None:
            continue
        half = n.parent.modulus / 2
        if isinstance(half, Fraction) and isinstance(n.modulus, Fraction):
            bad = n.modulus != half
        else:
            bad = abs(float(n.modulus) - float(half)) > tol * max(float(half), 1e-300)
        if bad:
            out.append(Violation(COVERING, f"A_{n.annulus}(0)", n.modulus, half))
    return out


def _m0(nest: Nest) -> Optional[int]:
    low = []
    for a in nest.annuli:
        g = a.intermediate_generation
        if g is None or g < 1:
            low.append(a.outer_generation)
    return max(low) + 1 if low else 0


def divergence_report(nest: Nest, batch_count: int, tol: float = 0.0) -> DivergenceReport:
    """Batches of pairwise disjoint complementary annuli and their sums.

    m0 is the smallest outer generation from which on every annulus has
    intermediate generation at least 1.  Each next batch is the first
    later generation whose selected annuli avoid everything selected so
    far.  A batch whose generation is only partly inside the window counts
    when its visible sum already meets M0 / 2 (moduli are positive, so the
    full sum is larger); otherwise the scan stops there.
    """
    exact = all(isinstance(a.modulus, Fraction) for a in nest.annuli)
    violations = check_inequalities(nest, tol)
    m0 = _m0(nest)
    grands = []
    for a in nest.annuli:
        if a.outer_generation < m0:
            continue
        try:
            grands.append(grand_ancestor(a)[0])
        except (IntermediateGenerationTooLow, ChainUnknown):
            continue
    grands = list({id(g): g for g in grands}.values())
    top = nest.achieved_generation
    if not grands or any(g.modulus is None for g in grands):
        report = DivergenceReport(M0=None, m0=m0, batches=[], running_total=0, requested=batch_count,
                                  achieved_generation=top, violations=violations, exact=exact)
        raise InsufficientDepth(f"no complementary annuli of outer generation >= {m0} with known grand-ancestor moduli in the window", report)
    M0 = min(g.modulus for g in grands)
    half = M0 / 2
    by_gen = {}
    for a in nest.annuli:
        by_gen.setdefault(a.outer_generation, []).append(a)
    taken = []
    batches = []
    total = Fraction(0) if exact else 0.0
    stop = None
    for m in range(max(m0, 0), top + 1):
        if len(batches) >= batch_count:
            break
        group = by_gen.get(m)
        if not group:
            continue
        parity, chosen = select_nonoverlapping(group)
        if any(a.overlaps(b) for a in chosen for b in taken):
            continue
        if any(a.modulus is None for a in chosen):
            stop = f"generation {m} has annuli without moduli"
            break
        s = sum((a.modulus for a in chosen), Fraction(0) if exact else 0.0)
        b = Batch(outer_generation=m, parity=parity, selected=chosen, batch_sum=s, count=len(group))
        if _below(s, half, tol):
            if b.complete:
                violations.append(Violation(BATCH, f"outer generation {m}", s, half))
            else:
                stop = f"generation {m} is cut off by the window ({len(group)} of >= {2 ** m} annuli)"
                break
        batches.append(b)
        taken.extend(chosen)
        total += s
    report = DivergenceReport(M0=M0, m0=m0, batches=batches, running_total=total, requested=batch_count,
                              achieved_generation=top, violations=violations, exact=exact)
    if len(batches) < batch_count:
        raise InsufficientDepth(f"{len(batches)} of {batch_count} batches fit the window"
                                + (f"; {stop}" if stop else ""), report)
    return report


# -- synthetic mode ---------------------------------------------------------

FIBONACCI = ("001", "0011")

DEFAULT_SPEC = {
    "rotation": "1/3",
    "kneading": list(FIBONACCI),
    "window": 3500,
    "root": 2,
    "branching": 2,
    "moduli": {"M0": "1", "spread": "1", "root_annulus": "1", "degenerate": False, "grid": 16},
    "violations": [],
}


def fibonacci_angle(words: Sequence[str], bits: int) -> Fraction:
    """Binary angle whose expansion is the Fibonacci concatenation of the
    two words (w_{k+1} = w_k w_{k-1}), truncated to ``bits`` digits."""
    a, b = words
    while len(b) < bits:
        a, b = b, b + a
    b = b[:bits]
    return Fraction(int(b, 2), 2 ** len(b))


def _frac(x, name) -> Fraction:
    try:
        return Fraction(str(x))
    except (ValueError, ZeroDivisionError) as e:
        raise InvalidSpec(f"{name}: {x!r} is not a rational number") from e


def _merge(spec: Optional[dict]) -> dict:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULT_SPEC.items()}
    for k, v in (spec or {}).items():
        if k not in out:
            raise InvalidSpec(f"unknown key {k!r}")
        if k == "moduli":
            if not isinstance(v, dict):
                raise InvalidSpec("moduli must be a mapping")
            bad = set(v) - set(out["moduli"])
            if bad:
                raise InvalidSpec(f"unknown moduli keys {sorted(bad)}")
            out["moduli"].update(v)
        else:
            out[k] = v
    return out


def synthetic_tableau(spec: Optional[dict] = None) -> Tableau:
    from .symbolic import SymbolicPuzzle
    sp = _merge(spec)
    W = int(sp["window"])
    if W < 8:
        raise InvalidSpec("window must be at least 8")
    words = sp["kneading"]
    if isinstance(words, str):
        theta = _frac(words, "kneading")
    else:
        if len(words) != 2 or not all(set(w) <= {"0", "1"} and w for w in words):
            raise InvalidSpec("kneading must be two binary words or an angle")
        theta = fibonacci_angle(words, 2 * W + 400)
    try:
        puzzle = SymbolicPuzzle(_frac(sp["rotation"], "rotation"), theta)
        D = puzzle.critical_depths(W, W)
    except ValueError as e:
        raise InvalidSpec(str(e)) from e
    return from_critical_depths(D, W, source=f"lamination {sp['rotation']}")


def synthetic_nest(spec: Optional[dict] = None, seed: int = 0, tableau: Optional[Tableau] = None) -> Nest:
    """Tree, dual nest and planted exact moduli.

    The tree comes from the exact combinatorics of a real critical angle
    (by default the Fibonacci angle in the 1/3 limb), so children, images
    and ancestors are those the dynamics produce.  Moduli are planted:
    grand ancestors get values in [M0, M0 (1 + spread)], one of them M0
    exactly; an offspring whose outer annulus is pulled back k times gets
    its ancestor's modulus times (1/2)**(k - s) and s seeded losses in
    [1/2, 1).  Tree annuli get root_annulus / 2**generation, or 0 when
    planted degenerate.  Entries of ``violations`` break one inequality on
    purpose: {"kind": "onestep", "annulus": j} or {"kind": "covering",
    "depth": d}.
    """
    sp = _merge(spec)
    if int(sp["branching"]) < 2:
        raise InvalidSpec("branching must be at least 2")
    mod = sp["moduli"]
    M0 = _frac(mod["M0"], "M0")
    spread = _frac(mod["spread"], "spread")
    root_mod = _frac(mod["root_annulus"], "root_annulus")
    grid = int(mod["grid"])
    if M0 <= 0 or spread < 0 or root_mod <= 0 or grid < 2:
        raise InvalidSpec("moduli must be positive and the loss grid at least 2")
    t = tableau if tableau is not None else synthetic_tableau(sp)
    nest = build_nest(int(sp["root"]), t, mode="synthetic")
    for node in nest.sequence:
        if len(node.children) < int(sp["branching"]) and node.annulus + 2 * max(node.iterate_to_root, 1) < t.depths // 2:
            raise InvalidSpec(f"A_{node.annulus}(0) has {len(node.children)} children, below the planned branching")
    rng = np.random.default_rng(seed)
    breaks = {}
    for v in sp["violations"]:
        kind = v.get("kind")
        if kind == "onestep":
            breaks[("onestep", int(v["annulus"]))] = True
        elif kind == "covering":
            breaks[("covering", int(v["depth"]))] = True
        else:
            raise InvalidSpec(f"unknown violation kind {kind!r}")
    degenerate = bool(mod["degenerate"])
    for node in nest.sequence:
        node.degenerate = degenerate
        if degenerate:
            node.modulus = Fraction(0)
        else:
            node.modulus = root_mod if node.parent is None else node.parent.modulus / 2
        if ("covering", node.annulus) in breaks:
            if degenerate or node.parent is None:
                raise InvalidSpec(f"covering violation needs a non-degenerate child at depth {node.annulus}")
            node.modulus = node.parent.modulus
    exact_min = None
    for a in nest.annuli:
        try:
            link = _link(a)
        except (IntermediateGenerationTooLow, ChainUnknown):
            a.modulus = M0 * (1 + spread * Fraction(int(rng.integers(0, grid)), grid))
            if exact_min is None:
                exact_min = a
            continue
        k = link.pullback_steps
        s = int(rng.integers(0, k + 1))
        f = Fraction(1, 2 ** (k - s))
        for _ in range(s):
            f *= Fraction(int(rng.integers(grid // 2, grid)), grid)
        a.modulus = link.ancestor.modulus * f
        if ("onestep", a.index) in breaks:
            a.modulus = link.factor * link.ancestor.modulus / 2
    if exact_min is not None:
        exact_min.modulus = M0
    for key in breaks:
        if key[0] == "onestep" and not 0 <= key[1] < len(nest.annuli):
            raise InvalidSpec(f"no complementary annulus {key[1]}")
    nest.planted = {"spec": sp, "seed": seed}
    return nest


# -- geometric mode ---------------------------------------------------------

def geometric_nest(puzzle, source: Tableau, root: int = 0, generations: Optional[int] = None,
                   resolution: int = 256, moduli: bool = True) -> Nest:
    """Nest read off a computed puzzle.  Regions come from the puzzle and
    moduli from the grid solver; the tree is whatever the window holds."""
    from .modulus import ModulusError, estimate_modulus

    nest = build_nest(root, source, generations, mode="geometric", require_excellent=False)
    deepest = nest.sequence[-1].annulus
    while puzzle.depth < deepest:
        puzzle.refine()
    for node in nest.sequence:
        if node.annulus > 0:
            node.region = puzzle.critical_annulus(node.annulus)
    for a in nest.annuli:
        outer = puzzle.critical_piece(a.outer_annulus.annulus)
        inner = puzzle.critical_piece(a.inner_annulus.annulus - 1)
        a.region = puzzle.annulus_between(outer, inner, label=a.label)
    if moduli:
        for obj in list(nest.sequence) + list(nest.annuli):
            if obj.region is None:
                continue
            try:
                est = estimate_modulus(obj.region, resolution, narrow="degenerate")
                obj.modulus = est.value
            except ModulusError:
                obj.modulus = None
            if isinstance(obj, DescendantNode):
                obj.degenerate = obj.modulus == 0
    return nest


def shrinking_trend(puzzle, depths: Sequence[int]) -> list[tuple[int, float]]:
    """Diameters of the critical pieces P_d(0): evidence of shrinking only."""
    return [(d, puzzle.critical_piece(d).diameter()) for d in depths]
