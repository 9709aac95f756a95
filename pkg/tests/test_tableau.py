from fractions import Fraction

import numpy as np
import pytest

from dualnest.symbolic import SymbolicPuzzle
from dualnest.tableau import (ChildLink, Mark, WindowTooShallow, build_tableau, child_iterate,
                              children_of, column_rule_violations, from_critical_depths, from_rows,
                              is_excellent, is_periodic, is_recurrent, parent_links)


@pytest.fixture(scope="module")
def ci_symbolic():
    return build_tableau(SymbolicPuzzle(Fraction(1, 3), Fraction(1, 6)), 7, 20)


@pytest.fixture(scope="module")
def ci_geometric(ci_puzzle):
    return build_tableau(ci_puzzle, 7, 20)


def test_column_zero_is_all_critical(ci_geometric):
    assert (ci_geometric.codes[:, 0] == "C").all()
    assert all(m is Mark.CRITICAL for m in ci_geometric.column(0))


def test_geometric_column_rule(ci_geometric):
    assert column_rule_violations(ci_geometric) == []
    assert ci_geometric.unresolvable_fraction() < 0.05


def test_geometric_tableau_matches_symbolic_model(ci_geometric, ci_symbolic):
    g, s = ci_geometric.codes, ci_symbolic.codes
    known = (g != "U") & (s != "U")
    assert known.mean() > 0.95
    assert (g[known] == s[known]).all()


def test_critical_value_leaves_the_critical_piece_early(ci_symbolic):
    # c = i is preperiodic, so no column beyond 0 stays critical for long
    assert not is_periodic(ci_symbolic).periodic
    assert max(ci_symbolic.critical_depth(k) for k in range(1, 20)) < 6


def test_from_critical_depths_layout():
    t = from_critical_depths([5, 0, 2, -1], 5)
    assert t.rows() == ["CCCS", "CSCO", "COCO", "COSO", "COOO"]
    assert column_rule_violations(t) == []
    assert [t.critical_depth(j) for j in range(1, 4)] == [0, 2, -1]


def test_from_rows_rejects_unknown_letters():
    with pytest.raises(ValueError):
        from_rows(["CX"])


def test_column_rule_flags_bad_columns():
    t = from_rows(["CCC", "CSC", "CCO", "CUO"])
    assert column_rule_violations(t) == [1]


def test_unresolvable_entries_are_skipped_by_column_rule():
    t = from_rows(["CC", "CU", "CS", "CO"])
    assert column_rule_violations(t) == []


def test_indexing_and_csv_roundtrip():
    t = from_rows(["CCO", "CSO"])
    assert t[1, 1] is Mark.SEMI_CRITICAL
    body = [r for r in t.to_csv().splitlines() if not r.startswith("#")]
    assert len(body) >= 2


def test_child_rule_first_non_off_critical_entry_decides():
    # rows d = 0..3; A_3(0) looks at (2,1) = O then (1,2) = C: child with n = 2
    t = from_rows(["CCCC", "COCO", "COOO", "COOO"])
    assert child_iterate(t, 3) == (2, False)
    # an S before any C blocks the link
    t = from_rows(["CCCC", "CSCO", "COOO", "COOO"])
    assert child_iterate(t, 2) is None


def test_unresolvable_entry_makes_link_conditional():
    t = from_rows(["CCCC", "CCCO", "CUOO", "COOO"])
    assert child_iterate(t, 3) == (2, True)


def test_children_and_excellence():
    t = from_critical_depths([40, 3, 0, 1, 0, 6, 0, 1, 0, 2], 12)
    links = parent_links(t)
    assert all(d - n >= 0 for d, (n, _) in links.items())
    kids = children_of(t, 0)
    assert kids and all(k.parent == (0, 0) for k in kids)
    assert [k.iterate for k in kids] == sorted(k.iterate for k in kids)
    rich = [k for k in kids if len(children_of(t, k.child[0])) >= 2]
    for k in rich:
        assert is_excellent(t, k)


def test_excellence_never_reports_false():
    t = from_critical_depths([10, 0, 0, 0], 4)
    with pytest.raises(WindowTooShallow):
        is_excellent(t, ChildLink(child=(3, 0), parent=(2, 0), iterate=1))


def test_children_outside_window_raise():
    t = from_rows(["CC", "CO"])
    with pytest.raises(WindowTooShallow):
        children_of(t, 5)


def test_recurrence_verdict_uses_columns_after_zero():
    t = from_critical_depths([9, 1, 9, 0], 6)
    v = is_recurrent(t)
    assert v.recurrent_so_far
    assert v.witnesses[-1] == (2, 5)
    t = from_critical_depths([9, 1, 2, 0], 6)
    assert not is_recurrent(t).recurrent_so_far
    d = is_recurrent(t).to_dict()
    assert d["window"] == {"depths": 6, "width": 4}


def test_periodic_column_detected():
    t = from_critical_depths([9, 0, 0, 9], 5)
    assert is_periodic(t).columns == [3]
    assert np.array_equal(t.codes[:, 3], np.array(["C"] * 5))
