"""The twelve acceptance criteria, each at its stated tolerance.

Every test records its outcome with the ``acceptance`` fixture; the
terminal summary prints one pass/fail line per criterion.
"""
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import AIRPLANE, C_I
from dualnest.cli import main
from dualnest.dynamics import Parameter, escapes, green_value
from dualnest.modulus import covering_ratio_check, estimate_modulus, groetzsch_audit, round_annulus
from dualnest.nest import IntermediateGenerationTooLow, ancestor_of, synthetic_nest
from dualnest.puzzle import AnnulusRegion, forward_covariance
from dualnest.rays import landing_point, trace_ray_robust
from dualnest.tableau import build_tableau, column_rule_violations


def _check(acceptance, number, passed, detail):
    acceptance(number, passed, detail)
    assert passed, detail


def test_criterion_01_round_annulus_oracle(acceptance):
    worst = {512: 0.0, 1024: 0.0}
    monotone = True
    for R in (2.0, math.e, 4.0):
        exact = math.log(R) / (2 * math.pi)
        est = estimate_modulus(round_annulus(1, R), 1024, refinement=(128, 256, 512))
        hist = dict(est.refinement_history)
        for n in worst:
            worst[n] = max(worst[n], abs(hist[n] - exact) / exact)
        err = [abs(v - exact) for _, v in est.refinement_history]
        monotone &= all(b <= a for a, b in zip(err, err[1:]))
    ok = worst[512] < 0.02 and worst[1024] < 0.01 and monotone
    _check(acceptance, 1, ok, f"rel err {worst[512]:.1e} at 512, {worst[1024]:.1e} at 1024, monotone={monotone}")


def test_criterion_02_green_functional_equation(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    for c in (0j, 1j, -2 + 0j):
        p = Parameter(c)
        pts = []
        while len(pts) < 1000:
            r = rng.uniform(0.5, 6.0, 4000)
            z = r * np.exp(2j * np.pi * rng.random(4000))
            pts.extend(z[np.asarray(escapes(p, z))].tolist())
        z = np.array(pts[:1000])
        worst = max(worst, float(np.abs(green_value(p, z * z + c) - 2 * green_value(p, z)).max()))
    # closed forms: log|z| for c = 0, log|w| with z = w + 1/w for c = -2
    z = np.array(pts[:1000])
    w = (z + np.sqrt(z - 2) * np.sqrt(z + 2)) / 2
    oracle = max(float(np.abs(green_value(Parameter(-2), z) - np.log(np.abs(w))).max()),
                 float(np.abs(green_value(Parameter(0), 2 * z) - np.log(np.abs(2 * z))).max()))
    ok = worst < 1e-9 and oracle < 1e-9
    _check(acceptance, 2, ok, f"max |G(f z) - 2 G(z)| = {worst:.1e}, closed-form error {oracle:.1e}")


def test_criterion_03_alpha_rays_land_at_alpha(acceptance):
    c = C_I.c
    roots = np.roots([1, -1, c])
    ray0 = trace_ray_robust(C_I, Fraction(0))
    beta_land = landing_point(ray0, C_I)
    beta = roots[np.argmin(np.abs(roots - beta_land))]
    alpha = roots[np.argmax(np.abs(roots - beta_land))]
    dist = []
    for a in (Fraction(1, 7), Fraction(2, 7), Fraction(4, 7)):
        dist.append(abs(landing_point(trace_ray_robust(C_I, a), C_I) - alpha))
    ok = max(dist) < 1e-4 and abs(beta_land - beta) < 1e-4
    _check(acceptance, 3, ok, f"max distance to alpha {max(dist):.1e}")


def test_criterion_04_markov_report(tmp_path, acceptance):
    code = main(["puzzle", "--c-re", "0", "--c-im", "1", "--limb", "1/3", "--depth", "6", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "markov_report.json").read_text())
    ok = code == 0 and rep["depths"] == 7 and rep["violations"] == []
    _check(acceptance, 4, ok, f"{len(rep['violations'])} violations over {rep['pairs_checked']} piece pairs")


def test_criterion_05_forward_covariance(ci_puzzle, acceptance):
    escapes_found, checked = 0, 0
    for d in range(6):
        rep = forward_covariance(ci_puzzle, d, samples=100, seed=d)
        checked += rep["checked"]
        escapes_found += sum(e["count"] for e in rep["escapes"])
    _check(acceptance, 5, escapes_found == 0 and checked > 0, f"{escapes_found} escapes in {checked} samples")


def test_criterion_06_separation(ci_puzzle, acceptance):
    seps = [ci_puzzle.separation(d) for d in range(5)]
    ok = all(s > 0 for s in seps)
    _check(acceptance, 6, ok, "separation " + ", ".join(f"{s:.3g}" for s in seps))


def test_criterion_07_column_rule(ci_puzzle_deep, airplane_puzzle, acceptance):
    details, ok = [], True
    for name, pz in (("c=i", ci_puzzle_deep), ("airplane", airplane_puzzle)):
        t = build_tableau(pz, 11, 40)
        bad = column_rule_violations(t)
        frac = t.unresolvable_fraction()
        ok &= not bad and frac < 0.05
        details.append(f"{name}: {len(bad)} bad columns, U {frac:.1%}")
    _check(acceptance, 7, ok, "; ".join(details))


# orbit positions j and depths d whose annuli are wide enough for the solver
GEOMETRIC_PAIRS = [(2, 2), (3, 1), (3, 3), (4, 0), (4, 2), (5, 1), (5, 3), (6, 0)]


def test_criterion_08_covering_ratios(ci_puzzle, acceptance):
    crit = covering_ratio_check(round_annulus(1.2**2, 1.9**2), round_annulus(1.2, 1.9), "C", 512, 0.01)
    off = covering_ratio_check(round_annulus(1, 2.5, center=1 + 1j), round_annulus(1, 2.5), "O", 512, 0.01)
    pz = ci_puzzle
    t = build_tableau(pz, 7, 8)
    orbit = t.orbit

    def ann(d, z):
        return pz.annulus_between(pz.piece_containing(d - 1, z), pz.piece_containing(d, z))

    ratios = []
    for d, j in GEOMETRIC_PAIRS:
        v = covering_ratio_check(ann(d - 1, orbit[j + 1]), ann(d, orbit[j]), t[d, j], 512, 0.05)
        ratios.append((d, j, v.mark, v.ratio, v.passed))
    ok = crit.passed and off.passed and all(r[-1] for r in ratios)
    geo = ", ".join(f"{m[0]}{d},{j}:{r:.3f}" for d, j, m, r, _ in ratios)
    _check(acceptance, 8, ok, f"fixtures C {crit.ratio:.4f}, O {off.ratio:.4f}; c=i {geo}")


def test_criterion_09_groetzsch(acceptance):
    rng = np.random.default_rng(9)
    worst, concentric_gap, n = math.inf, 0.0, 0
    for k in range(20):
        R = rng.uniform(3.0, 4.0)
        rho = rng.uniform(1.6, R - 0.6)
        room = min(rho - 1.3, R - 0.3 - rho)
        shift = 0j if k < 10 else room * rng.uniform(0.3, 1.0) * np.exp(2j * np.pi * rng.random())
        outer, inner = round_annulus(1, R).outer, round_annulus(1, R).inner
        mid = round_annulus(1, rho, center=shift).outer
        whole = AnnulusRegion(outer=outer, inner=inner)
        parts = [AnnulusRegion(outer=outer, inner=mid), AnnulusRegion(outer=mid, inner=inner)]
        defect, eps = groetzsch_audit(whole, parts, resolution=256)
        worst = min(worst, defect + eps)
        if k < 10:
            concentric_gap = max(concentric_gap, abs(defect) - eps)
        n += 1
    ok = worst >= 0 and concentric_gap <= 0
    _check(acceptance, 9, ok, f"{n} subdivisions, min defect + eps {worst:.2e}, concentric excess {concentric_gap:.2e}")


def test_criterion_10_exact_accounting(tmp_path, acceptance):
    spec = {"moduli": {"degenerate": True, "M0": "1"}}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    code = main(["nest", "--mode", "synthetic", "--spec", str(path), "--batches", "5", "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "divergence.json").read_text())
    sums = [Fraction(b["batch_sum"]["exact"]) for b in doc["batches"]]
    total = Fraction(doc["running_total"]["exact"])
    exact_ok = (code == 0 and doc["exact"] and Fraction(doc["M0"]["exact"]) == 1 and len(sums) == 5
                and all(s >= Fraction(1, 2) for s in sums) and total >= Fraction(5, 2))
    nest = synthetic_nest(spec)
    keys = nest.keys()
    unique, checked = True, 0
    for a in nest.annuli:
        try:
            link = ancestor_of(a)
        except IntermediateGenerationTooLow:
            continue
        K = a.inner_annulus.iterate
        target = np.array([a.outer_annulus.annulus - K, a.middle_annulus.annulus - K,
                           a.inner_annulus.parent.annulus, a.inner_generation - 1])
        hits = np.nonzero((keys == target).all(axis=1))[0]
        unique &= len(hits) == 1 and nest.annuli[hits[0]] is link.ancestor
        checked += 1
    degenerate = all(n.modulus == 0 for n in nest.sequence)
    ok = exact_ok and unique and degenerate
    _check(acceptance, 10, ok, f"batch sums {[str(s) for s in sums]}, total {total}, "
                                f"{checked} ancestors unique={unique}")


def test_criterion_11_negative_control(tmp_path, capsys, acceptance):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"violations": [{"kind": "onestep", "annulus": 100}]}))
    code = main(["nest", "--mode", "synthetic", "--spec", str(path), "--out", str(tmp_path)])
    err = capsys.readouterr().err
    ok = code == 3 and "Lemma onestep" in err
    _check(acceptance, 11, ok, f"exit {code}, names onestep: {'Lemma onestep' in err}")


def test_criterion_12_determinism(tmp_path, acceptance):
    commands = [
        ["rays", "--limb", "1/3"],
        ["puzzle", "--limb", "1/3", "--depth", "3"],
        ["tableau", "--limb", "1/3", "--depth", "6", "--width", "20"],
        ["nest", "--mode", "synthetic", "--batches", "5", "--seed", "4"],
        ["modulus", "squares", "--grid", "256"],
    ]
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        codes = [main(cmd + ["--out", str(out)]) for cmd in commands]
        assert codes == [0] * len(commands)
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    differ = [name for name in runs[0] if runs[0][name] != runs[1].get(name)]
    ok = not differ and runs[0].keys() == runs[1].keys()
    _check(acceptance, 12, ok, f"{len(runs[0])} files compared, differing: {differ or 'none'}")
