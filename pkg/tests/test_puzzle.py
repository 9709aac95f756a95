from fractions import Fraction

import numpy as np
import pytest

from conftest import C_I
from dualnest.dynamics import Parameter, fixed_points
from dualnest.puzzle import (OnBoundary, OutsidePuzzle, Puzzle, degree_check, forward_covariance,
                             markov_check, nested_gap)
from dualnest.symbolic import SymbolicPuzzle


def test_depth_zero_has_one_piece_per_ray(ci_puzzle):
    # three rays landing at alpha cut the disc into three sectors
    assert len(ci_puzzle.levels[0]) == 3
    assert sum(p.contains_critical for p in ci_puzzle.levels[0]) == 1


def test_alpha_is_the_landing_point(ci_puzzle):
    assert abs(ci_puzzle.alpha - fixed_points(C_I).alpha) < 1e-12


@pytest.mark.parametrize("d", range(4))
def test_piece_counts_match_symbolic_model(ci_puzzle, d):
    sym = SymbolicPuzzle(Fraction(1, 3), Fraction(1, 6))
    assert len(ci_puzzle.levels[d]) == len(sym.pieces(d))


def test_critical_piece_contains_zero(ci_puzzle):
    for d in range(ci_puzzle.depth + 1):
        p = ci_puzzle.critical_piece(d)
        assert p.contains_points([0j])[0]
        assert ci_puzzle.piece_containing(d, 0j) is p


def test_critical_pieces_are_nested(ci_puzzle):
    for d in range(1, ci_puzzle.depth + 1):
        assert ci_puzzle.parent(ci_puzzle.critical_piece(d)) is ci_puzzle.critical_piece(d - 1)


def test_image_of_critical_piece_contains_critical_value(ci_puzzle):
    for d in range(1, 5):
        img = ci_puzzle.image(ci_puzzle.critical_piece(d))
        assert img.contains_points([C_I.c])[0]


def test_markov_property_small(ci_puzzle):
    rep = markov_check(ci_puzzle, samples=6, seed=1, pieces=ci_puzzle.levels[:4])
    assert rep["violations"] == []
    assert rep["pairs_checked"] > 0


@pytest.mark.parametrize("d", range(4))
def test_forward_covariance(ci_puzzle, d):
    rep = forward_covariance(ci_puzzle, d, samples=30, seed=d)
    assert rep["checked"] > 0
    assert rep["escapes"] == []


def test_critical_piece_maps_two_to_one(ci_puzzle):
    counts = degree_check(ci_puzzle, ci_puzzle.critical_piece(3), samples=40)
    assert set(counts) == {2}


def test_off_critical_piece_maps_one_to_one(ci_puzzle):
    p = next(q for q in ci_puzzle.levels[3] if not q.contains_critical)
    assert set(degree_check(ci_puzzle, p, samples=40)) == {1}


def test_point_on_boundary_is_reported(ci_puzzle):
    with pytest.raises(OnBoundary):
        ci_puzzle.piece_containing(2, ci_puzzle.alpha)


def test_point_above_equipotential_is_outside(ci_puzzle):
    with pytest.raises(OutsidePuzzle):
        ci_puzzle.piece_containing(0, 10 + 0j)


def test_critical_membership_matches_piece_lookup(ci_puzzle):
    rng = np.random.default_rng(5)
    z = ci_puzzle.critical_piece(1).interior_samples(30, rng, delta=1e-3)
    got = ci_puzzle.critical_membership_many(3, z)
    for w, m in zip(z, got):
        assert m == ci_puzzle.critical_membership(3, w)


def test_separation_is_a_distance(ci_puzzle):
    for d in range(3):
        s = ci_puzzle.separation(d)
        assert s >= 0
        assert s <= ci_puzzle.critical_piece(d).diameter()


def test_nested_gap_of_concentric_circles():
    t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    assert nested_gap(2 * np.exp(1j * t), np.exp(1j * t)) == pytest.approx(1.0, abs=1e-3)


def test_annulus_requires_nesting(ci_puzzle):
    from dualnest.puzzle import NotNested
    a = ci_puzzle.critical_piece(2)
    b = next(q for q in ci_puzzle.levels[3] if not ci_puzzle.is_ancestor(a, q))
    with pytest.raises(NotNested):
        ci_puzzle.annulus_between(a, b)


def test_missing_limb_is_rejected():
    with pytest.raises(ValueError):
        Puzzle(Parameter(1j))
