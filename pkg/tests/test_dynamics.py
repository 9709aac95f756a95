import cmath

import numpy as np
import pytest

from dualnest.dynamics import (DegenerateFixedPoint, Parameter, critical_orbit, escapes, evaluate,
                               fixed_points, green_value, multiplier, orbit)


def roots(c):
    return np.roots([1, -1, c])


@pytest.mark.parametrize("c", [0, 1j, -2, -1, 0.25 + 0.3j, -0.75 + 0.1j, -1.7548776662466927])
def test_fixed_points_match_polynomial_roots(c):
    fp = fixed_points(Parameter(c))
    r = roots(c)
    for z in (fp.alpha, fp.beta):
        assert min(abs(r - z)) < 1e-12
        assert abs(z * z - z + c) < 1e-13
    assert abs(fp.alpha - fp.beta) > 1e-6


def test_fixed_points_at_zero():
    fp = fixed_points(Parameter(0))
    assert fp.alpha == 0 and fp.beta == 1


def test_beta_is_principal_branch():
    c = 1j
    fp = fixed_points(Parameter(c))
    assert abs(fp.beta - (1 + cmath.sqrt(1 - 4 * c)) / 2) < 1e-14


def test_cusp_is_degenerate():
    with pytest.raises(DegenerateFixedPoint):
        fixed_points(Parameter(0.25))


def test_multiplier_and_evaluate():
    p = Parameter(1j)
    assert evaluate(p, 2) == 4 + 1j
    assert multiplier(p, 0.5) == 1


def test_critical_orbit_of_i_is_preperiodic():
    pts = critical_orbit(Parameter(1j), 6).points
    assert pts[0] == 0 and pts[1] == 1j
    assert abs(pts[2] - (-1 + 1j)) < 1e-15
    assert abs(pts[4] - pts[2]) < 1e-15  # -1+i, -i, -1+i, ...


def test_orbit_length_and_start():
    o = orbit(Parameter(0), 0.5, 4)
    assert len(o) == 4 and o[3] == 0.5 ** 8


def test_critical_orbit_rejects_empty():
    with pytest.raises(ValueError):
        critical_orbit(Parameter(0), 0)


def test_green_of_zero_parameter_is_log_modulus():
    z = np.array([2, 3j, -5 + 1j, 1.5])
    assert np.allclose(green_value(Parameter(0), z), np.log(np.abs(z)), rtol=0, atol=1e-14)


def test_green_vanishes_on_filled_set():
    assert green_value(Parameter(0), 0.3 + 0.2j) == 0
    assert green_value(Parameter(-2), 1.5) == 0


def test_green_scalar_and_array_shapes():
    p = Parameter(1j)
    assert isinstance(green_value(p, 3.0), float)
    assert green_value(p, np.ones((2, 3)) * 3).shape == (2, 3)


def test_escapes():
    p = Parameter(-2)
    out = escapes(p, np.array([0.0, 2.5, 1j]))
    assert out.tolist() == [False, True, True]
