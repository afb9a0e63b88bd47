import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from foilwinding.bspline import BSplineBasis, make_basis
from foilwinding.errors import DomainError


def test_seven_splines_knots():
    b = make_basis(7, (-1.0, 1.0))
    expected = [-1, -1, -1, -0.6, -0.2, 0.2, 0.6, 1, 1, 1]
    assert len(b.knots) == 10
    np.testing.assert_allclose(b.knots, expected, rtol=0, atol=1e-15)


def test_three_splines_are_bernstein():
    b = make_basis(3, (0.0, 1.0))
    np.testing.assert_array_equal(b.knots, [0, 0, 0, 1, 1, 1])
    t = np.linspace(0, 1, 17)
    np.testing.assert_allclose(b.values(t), np.column_stack([(1 - t) ** 2, 2 * t * (1 - t), t ** 2]),
                               atol=1e-15)
    assert b.eval(1, 0.5) == pytest.approx(0.5, abs=1e-15)


def test_ten_splines_spans():
    b = make_basis(10, (-0.005, 0.005))
    spans = np.diff(b.breakpoints)
    assert len(spans) == 8
    np.testing.assert_allclose(spans, 0.01 / 8, rtol=1e-12)


def test_clamped_ends():
    b = make_basis(7, (-1.0, 1.0))
    assert b.eval(0, -1.0) == 1.0
    assert b.eval(6, 1.0) == 1.0


def test_rejects_bad_input():
    with pytest.raises(DomainError):
        BSplineBasis(2, (0, 1))
    with pytest.raises(DomainError):
        BSplineBasis(5, (1, 1))
    b = BSplineBasis(5, (0, 1))
    with pytest.raises(DomainError):
        b.values([1.1])
    with pytest.raises(DomainError):
        b.eval(5, 0.5)


@given(st.integers(3, 25), st.lists(st.floats(0, 1), min_size=1, max_size=100))
def test_partition_of_unity(n, ts):
    b = BSplineBasis(n, (-0.3, 0.7))
    alpha = -0.3 + np.asarray(ts)
    v = b.values(alpha)
    assert np.all(v >= -1e-15)
    assert np.abs(v.sum(axis=1) - 1).max() <= 1e-14
    d = b.derivatives(alpha)
    assert np.abs(d.sum(axis=1)).max() <= 1e-12 * n
    assert np.all(np.count_nonzero(v, axis=1) <= 3)


def test_support_spans():
    b = BSplineBasis(9, (0.0, 1.0))
    t = b.knots
    x = np.linspace(0, 1, 2001)[:-1]
    v = b.values(x)
    for i in range(b.n):
        nz = x[v[:, i] > 0]
        assert nz.min() >= t[i] - 1e-15 and nz.max() <= t[i + 3]


@given(st.integers(3, 15), st.floats(0.01, 0.99))
def test_derivative_matches_finite_differences(n, s):
    b = BSplineBasis(n, (0.0, 2.0))
    x = 2.0 * s
    if np.min(np.abs(b.knots - x)) < 1e-4:
        return
    h = 1e-7
    fd = (b.values([x + h]) - b.values([x - h])) / (2 * h)
    d = b.derivatives([x])
    np.testing.assert_allclose(d, fd, rtol=1e-6, atol=1e-6 * np.abs(d).max())


def test_integrals_match_symbolic_oracle():
    # exact integrals of the piecewise polynomials via sympy
    n = 6
    b = BSplineBasis(n, (0.0, 1.0))
    x = sympy.Symbol("x")
    interior = [sympy.Rational(i, n - 2) for i in range(1, n - 2)]
    knots = tuple([0, 0, 0] + interior + [1, 1, 1])
    exact = [sympy.integrate(sympy.bspline_basis(2, knots, i, x), (x, 0, 1)) for i in range(n)]
    np.testing.assert_allclose(b.integrals, [float(e) for e in exact], rtol=1e-14)
    assert b.integrals.sum() == pytest.approx(1.0, rel=1e-14)


def test_greville_points():
    b = BSplineBasis(7, (-1.0, 1.0))
    np.testing.assert_allclose(b.greville, [-1, -0.8, -0.4, 0, 0.4, 0.8, 1], atol=1e-15)
