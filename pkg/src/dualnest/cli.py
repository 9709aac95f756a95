"""Command line front end.

    dualnest rays    --c-re 0 --c-im 1 --limb 1/3 --out out/
    dualnest puzzle  --c-re 0 --c-im 1 --limb 1/3 --depth 6 --out out/
    dualnest tableau --c-re 0 --c-im 1 --limb 1/3 --depth 10 --out out/
    dualnest nest    --mode synthetic --batches 5 --seed 0 --out out/
    dualnest modulus REGION.json --grid 512 --out out/

Exit codes: 0 success, 1 usage, 2 computation failure, 3 a violated
inequality (the alarm output of ``nest``).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_FAILURE, EXIT_VIOLATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    c_re: float = 0.0
    c_im: float = 1.0
    limb: Optional[str] = None
    angles: Optional[list] = None
    depth: int = 4
    width: int = 40
    r0: float = 1.0
    grid: int = 512
    tol: float = 1e-10
    out: str = "."
    mode: str = "geometric"
    spec: Optional[str] = None
    batches: int = 5
    threads: int = 1
    seed: int = 0
    region: Optional[str] = None

    def validate(self):
        if self.depth < 0:
            raise UsageError("--depth must be >= 0")
        if self.width < 2:
            raise UsageError("--width must be >= 2")
        if not (64 <= self.grid <= 4096 and self.grid & (self.grid - 1) == 0):
            raise UsageError("--grid must be a power of two between 64 and 4096")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")
        if not self.r0 > 0:
            raise UsageError("--r0 must be positive")
        if self.batches < 1:
            raise UsageError("--batches must be >= 1")
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")
        if self.mode not in ("geometric", "synthetic"):
            raise UsageError("--mode is geometric or synthetic")

    @property
    def c(self) -> complex:
        return complex(self.c_re, self.c_im)

    def echo(self) -> dict:
        d = asdict(self)
        d["out"] = None  # keep outputs independent of the directory name
        return d


# -- output -----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        s = format(x, ".17g")
        if "e" not in s and "." not in s and "n" not in s:
            s += ".0"
        return s
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, Fraction):
        return json.dumps(f"{x.numerator}/{x.denominator}")
    if isinstance(x, complex):
        return _fmt([x.real, x.imag])
    if isinstance(x, dict):
        items = [f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()]
        return "{" + ", ".join(items) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def header(config: RunConfig) -> dict:
    from .puzzle import ANNULUS_CONVENTION
    return {"tool": "dualnest", "version": __version__, "annulus_convention": ANNULUS_CONVENTION,
            "config": config.echo()}


def write_json(path: Path, config: RunConfig, body: dict) -> Path:
    doc = {"meta": header(config)}
    doc.update(body)
    path.write_text(_fmt(doc) + "\n")
    return path


def write_csv(path: Path, config: RunConfig, text: str) -> Path:
    meta = header(config)
    lines = [f"# dualnest {meta['version']}", f"# convention: {meta['annulus_convention']}",
             f"# config: {_fmt(meta['config'])}"]
    path.write_text("\n".join(lines) + "\n" + text)
    return path


def _pairs(z) -> list:
    z = np.asarray(z, dtype=complex)
    return [[float(a), float(b)] for a, b in zip(z.real, z.imag)]


def _angle_list(text: str) -> list:
    from .rays import parse_angle
    try:
        return [parse_angle(t.strip()) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as e:
        raise UsageError(f"bad angle list {text!r}: {e}") from e


def _limb(config: RunConfig) -> Optional[Fraction]:
    if config.limb is None:
        return None
    try:
        limb = Fraction(config.limb)
    except (ValueError, ZeroDivisionError) as e:
        raise UsageError(f"bad limb {config.limb!r}") from e
    if not 0 < limb < 1 or limb.denominator < 2:
        raise UsageError("--limb must be p/q in (0, 1)")
    return limb


def _param(config: RunConfig, need_limb: bool = False):
    from .dynamics import Parameter
    limb = _limb(config)
    if need_limb and limb is None:
        raise UsageError("--limb P/Q is required")
    return Parameter(config.c, limb)


class Failure(Exception):
    """Computation failure with a stage name."""

    def __init__(self, stage: str, msg: str):
        super().__init__(f"{stage}: {msg}")
        self.stage = stage


# -- commands ---------------------------------------------------------------

def cmd_rays(config: RunConfig) -> int:
    from .plotting import rays_figure
    from .rays import (NotLanded, TraceDiverged, alpha_cycle, format_angle, landing_point,
                       trace_equipotential, trace_ray_robust)
    param = _param(config)
    if config.angles:
        angles = _angle_list(",".join(config.angles))
    elif param.limb is not None:
        angles = list(alpha_cycle(param.limb).angles)
    else:
        raise UsageError("give --angles or --limb")
    out = Path(config.out)
    rays = []
    for a in angles:
        try:
            ray = trace_ray_robust(param, a, from_potential=config.r0, to_potential=1e-5)
        except TraceDiverged as e:
            raise Failure("trace", f"ray {format_angle(a)} failed: {e}") from e
        try:
            land, landed = landing_point(ray, param), True
        except NotLanded:
            land, landed = None, False
        rays.append({"angle": format_angle(a), "samples": _pairs(ray.samples),
                     "landing_point": None if land is None else [land.real, land.imag], "landed": landed})
    levels = [config.r0 * 2.0 ** -k for k in range(config.depth + 1)]
    eqs = []
    for t in levels:
        try:
            eqs.append(trace_equipotential(param, t, 256).samples)
        except TraceDiverged as e:
            raise Failure("trace", f"equipotential {t}: {e}") from e
    write_json(out / "rays.json", config, {"rays": rays})
    write_json(out / "equipotentials.json", config,
               {"equipotentials": [{"level": t, "samples": _pairs(z)} for t, z in zip(levels, eqs)]})
    rays_figure([(r["angle"], np.array([complex(*p) for p in r["samples"]])) for r in rays], eqs,
                out / "rays.svg",
                landing=[complex(*r["landing_point"]) for r in rays if r["landed"]])
    return EXIT_OK


def _build_puzzle(config: RunConfig, depth: int):
    from .puzzle import Puzzle, PuzzleError
    from .rays import TraceDiverged
    param = _param(config, need_limb=True)
    try:
        return Puzzle.build(param, depth, r0=config.r0)
    except (PuzzleError, TraceDiverged) as e:
        raise Failure(f"puzzle ({type(e).__name__})", str(e)) from e


def _decimate(b, cap=512):
    return b[:: max(1, len(b) // cap)]


def cmd_puzzle(config: RunConfig) -> int:
    from .plotting import puzzle_figure
    from .puzzle import markov_check
    from .rays import format_angle
    pz = _build_puzzle(config, config.depth)
    out = Path(config.out)
    depths = []
    for d in range(pz.depth + 1):
        pieces = []
        for p in pz.levels[d]:
            pieces.append({"id": p.id, "bounding_angles": [[format_angle(a), format_angle(b)] for a, b in p.arcs],
                           "contains_critical": bool(p.contains_critical),
                           "boundary": _pairs(_decimate(p.boundary))})
        depths.append({"depth": d, "level": pz.level(d),
                       "pieces": pieces})
    write_json(out / "puzzle.json", config, {"depths": depths})
    report = markov_check(pz, samples=20, seed=config.seed)
    write_json(out / "markov_report.json", config, report)
    rows = ["depth,separation"]
    for d in range(max(pz.depth - 1, 0)):
        rows.append(f"{d},{_fmt(pz.separation(d))}")
    write_csv(out / "separation.csv", config, "\n".join(rows) + "\n")
    puzzle_figure(pz, list(range(pz.depth + 1)), out / "puzzle.svg")
    return EXIT_OK


def cmd_tableau(config: RunConfig) -> int:
    from .plotting import tableau_figure
    from .tableau import (WindowTooShallow, build_tableau, children_of, column_rule_violations,
                          is_excellent, is_periodic, is_recurrent)
    pz = _build_puzzle(config, config.depth)
    t = build_tableau(pz, config.depth + 1, config.width)
    out = Path(config.out)
    write_csv(out / "tableau.csv", config, t.to_csv())
    links = []
    for d in range(t.depths):
        for link in children_of(t, d):
            entry = link.to_dict()
            try:
                entry["excellent"] = is_excellent(t, link)
            except WindowTooShallow:
                entry["excellent"] = "window-too-shallow"
            links.append(entry)
    write_json(out / "children.json", config, {"links": links})
    write_json(out / "verdicts.json", config, {
        "recurrence": is_recurrent(t).to_dict(), "periodicity": is_periodic(t).to_dict(),
        "column_rule_violations": column_rule_violations(t),
        "unresolvable_fraction": t.unresolvable_fraction()})
    tableau_figure(t, out / "tableau.svg")
    return EXIT_OK


def _load_spec(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read spec {path}: {e}") from e


def cmd_nest(config: RunConfig) -> int:
    from .nest import (InsufficientDepth, InvalidSpec, NestError, WindowTooShallow, divergence_report,
                       geometric_nest, synthetic_nest)
    from .plotting import divergence_figure
    out = Path(config.out)
    partial = False
    if config.mode == "synthetic":
        try:
            nest = synthetic_nest(_load_spec(config.spec), seed=config.seed)
        except InvalidSpec as e:
            raise UsageError(f"invalid spec: {e}") from e
        tol = 0.0
    else:
        from .tableau import build_tableau
        pz = _build_puzzle(config, config.depth)
        t = build_tableau(pz, config.depth + 1, config.width)
        try:
            nest = geometric_nest(pz, t, root=0, resolution=min(config.grid, 512))
        except (NestError, WindowTooShallow) as e:
            raise Failure("nest", str(e)) from e
        tol = 0.05
    try:
        report = divergence_report(nest, config.batches, tol=tol)
    except InsufficientDepth as e:
        if e.report is None or config.mode == "synthetic":
            write_json(out / "nest.json", config, nest.to_dict())
            raise Failure("divergence", str(e)) from e
        report, partial = e.report, True
        print(f"dualnest: partial report: {e}", file=sys.stderr)
    body = report.to_dict()
    body["partial"] = partial
    body["achieved_depth"] = nest.sequence[-1].annulus
    write_json(out / "nest.json", config, nest.to_dict())
    write_json(out / "divergence.json", config, body)
    divergence_figure(report, out / "divergence.svg")
    if report.violations:
        names = sorted({v.inequality for v in report.violations})
        for v in report.violations[:10]:
            print(f"dualnest: violated {v.inequality} at {v.where}", file=sys.stderr)
        print(f"dualnest: inequality violated: {', '.join(names)}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _region(config: RunConfig):
    from .modulus import pinched_annulus, round_annulus, square_annulus
    from .puzzle import AnnulusRegion
    name = config.region
    if name is None:
        raise UsageError("modulus needs a region file or fixture name")
    fixtures = {"round": lambda: round_annulus(1.0, math.e), "pinched": pinched_annulus,
                "squares": square_annulus}
    if name in fixtures:
        return fixtures[name]()
    try:
        data = json.loads(Path(name).read_text())
        outer = np.array([complex(x, y) for x, y in data["outer"]])
        inner = np.array([complex(x, y) for x, y in data["inner"]])
    except (OSError, KeyError, ValueError, TypeError) as e:
        raise UsageError(f"cannot read region {name}: {e}") from e
    if len(outer) < 3 or len(inner) < 3:
        raise UsageError("region curves need at least three points")
    return AnnulusRegion(outer=outer, inner=inner)


def cmd_modulus(config: RunConfig) -> int:
    from .modulus import ModulusError, estimate_modulus
    from .plotting import modulus_figure
    region = _region(config)
    try:
        est = estimate_modulus(region, config.grid, tolerance=config.tol,
                               refinement=tuple(n for n in (config.grid // 4, config.grid // 2) if n >= 64))
    except ModulusError as e:
        raise Failure(type(e).__name__, str(e)) from e
    out = Path(config.out)
    write_json(out / "modulus.json", config, est.to_dict())
    modulus_figure(region, est, out / "modulus.svg")
    return EXIT_OK


COMMANDS = {"rays": cmd_rays, "puzzle": cmd_puzzle, "tableau": cmd_tableau, "nest": cmd_nest,
            "modulus": cmd_modulus}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--c-re", type=float, default=0.0)
    common.add_argument("--c-im", type=float, default=1.0)
    common.add_argument("--limb", default=None, help="rotation number P/Q of the alpha fixed point")
    common.add_argument("--angles", default=None, help="comma separated angles p/q")
    common.add_argument("--depth", type=int, default=4)
    common.add_argument("--width", type=int, default=40, help="tableau columns")
    common.add_argument("--r0", type=float, default=1.0, help="potential of the depth-0 equipotential")
    common.add_argument("--grid", type=int, default=512)
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--mode", default="geometric", choices=("geometric", "synthetic"))
    common.add_argument("--spec", default=None, help="synthetic nest spec (JSON)")
    common.add_argument("--batches", type=int, default=5)
    common.add_argument("--out", default=".")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    parser = _Parser(prog="dualnest", description="Puzzles, tableaux and dual nests of z^2 + c.")
    parser.add_argument("--version", action="version", version=f"dualnest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "modulus":
            p.add_argument("region", help="JSON file with outer/inner point lists, or round|pinched|squares")
    return parser


def parse_config(argv) -> RunConfig:
    from .rays import format_angle
    ns = build_parser().parse_args(argv)
    cfg = RunConfig(command=ns.command, c_re=ns.c_re, c_im=ns.c_im, limb=ns.limb,
                    angles=[format_angle(a) for a in _angle_list(ns.angles)] if ns.angles else None, depth=ns.depth, width=ns.width,
                    r0=ns.r0, grid=ns.grid, tol=ns.tol, out=ns.out, mode=ns.mode, spec=ns.spec,
                    batches=ns.batches, threads=ns.threads, seed=ns.seed, region=getattr(ns, "region", None))
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_config(argv)
    except UsageError as e:
        print(f"dualnest: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help and --version
        return int(e.code or 0)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(config.threads))
    Path(config.out).mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[config.command](config)
    except UsageError as e:
        print(f"dualnest: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Failure as e:
        print(f"dualnest: failed at {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
