import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SIGMA_C, cartesian_system
from foilwinding import oracle
from foilwinding import postprocess as pp
from foilwinding.errors import DomainError
from foilwinding.mesh import Rect, Region, generate_rect_layout
from foilwinding.solver import CurrentDrive, Model, SweepResult, solve_frequency, sweep

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def system():
    return cartesian_system()


def test_dc_voltage_profile_is_uniform(system):
    s = solve_frequency(system, 0.0)
    phi = pp.voltage_profile(s, pp.default_samples(s))
    r_dc = oracle.dc_resistance(system.winding, system.symmetry, SIGMA_C)
    assert np.all(phi.imag == 0)
    np.testing.assert_allclose(phi.real, r_dc / system.winding.turns, rtol=0.01)
    assert r_dc / system.winding.turns == pytest.approx(13.2e-3, rel=5e-3)
    assert pp.terminal_voltage(s) == pytest.approx(s.voltage, rel=1e-14)


def test_voltage_profile_of_given_coefficients(system):
    s = solve_frequency(system, 0.0)
    zero = dataclasses.replace(s, u=np.zeros_like(s.u))
    assert not pp.voltage_profile(zero, [0.0, 0.001]).any()
    unit = np.zeros_like(s.u)
    unit[0] = 1
    first = dataclasses.replace(s, u=unit)
    a, b = system.winding.alpha_interval
    np.testing.assert_array_equal(pp.voltage_profile(first, [a, b]), [1, 0])
    with pytest.raises(DomainError):
        pp.voltage_profile(s, [b + 1e-6])


def test_impedance_independent_of_current(system):
    a = solve_frequency(system, TWO_PI * 500, CurrentDrive(1.0))
    b = solve_frequency(system, TWO_PI * 500, CurrentDrive(2.0 - 1.0j))
    assert pp.impedance(b) == pytest.approx(pp.impedance(a), rel=1e-12)
    with pytest.raises(DomainError):
        pp.impedance(dataclasses.replace(a, current=0j))


def test_dc_current_profiles(system):
    s = solve_frequency(system, 0.0)
    p = pp.current_profiles(s)
    np.testing.assert_allclose(p.i_cond, 1.0, rtol=5e-3)
    assert not p.i_cap.any()


@pytest.mark.parametrize("f", [10.0, 200.0])
def test_standard_model_current_condition(system, f):
    s = solve_frequency(system, TWO_PI * f, model=Model.STANDARD)
    p = pp.current_profiles(s, system.basis.greville)
    assert not p.i_cap.any()
    assert p.sum_error().max() <= 0.02
    assert not pp.capacitive_current_profile(s, [0.0]).any()


def test_zero_permittivity_has_no_capacitive_current(system):
    flat = system.without_capacitance()
    s = solve_frequency(flat, TWO_PI * 1e4)
    np.testing.assert_array_equal(pp.capacitive_current_profile(s, system.basis.greville), 0)


def test_high_frequency_current_reverses(system):
    s = solve_frequency(system, TWO_PI * 1e6)
    i_cond = pp.conductive_current_profile(s, pp.default_samples(s))
    assert np.any(np.diff(np.sign(i_cond.real)) != 0)


@pytest.mark.parametrize("f", [0.0, 11.0, 2.2e3, 4.5e4, 9e4, 1e6])
@pytest.mark.parametrize("model", list(Model))
def test_projected_current_residual(system, f, model):
    s = solve_frequency(system, TWO_PI * f, model=model)
    assert np.abs(pp.projected_current_residual(s)).max() <= 1e-10


def test_regime_signatures(system):
    alpha = np.linspace(*system.winding.alpha_interval, 201)
    low = pp.voltage_profile(solve_frequency(system, TWO_PI * 11.0), alpha)
    mid = pp.voltage_profile(solve_frequency(system, TWO_PI * 2.2e3), alpha)
    high = pp.voltage_profile(solve_frequency(system, TWO_PI * 9e4), alpha)
    assert np.linalg.norm(low.real) > np.linalg.norm(low.imag)
    assert np.linalg.norm(mid.imag) > np.linalg.norm(mid.real) and mid.imag.min() > 0
    assert np.linalg.norm(high.imag) > np.linalg.norm(high.real) and high.imag.max() < 0


def test_contours_of_linear_field():
    m = generate_rect_layout([Rect(0, 1, 0, 1, Region.AIR)], 0.125)
    x = m.nodes[:, 0]
    levels = pp.contour_levels(x, 3)
    np.testing.assert_allclose(levels, [0.25, 0.5, 0.75])
    for level in levels:
        lines = pp.iso_lines(m.nodes, m.triangles, x, level)
        assert len(lines) == 1 and not lines[0].closed
        np.testing.assert_allclose(lines[0].points[:, 0], level, atol=1e-15)
        ys = np.sort(lines[0].points[:, 1])
        assert ys[0] == 0 and ys[-1] == 1
    assert pp.contour_levels(np.ones(5), 3).size == 0
    assert pp.iso_lines(m.nodes, m.triangles, np.ones(m.n_nodes), 1.5) == []


def test_low_frequency_flux_lines_are_closed(system):
    s = solve_frequency(system, TWO_PI * 1.0)
    contours = pp.flux_contours(s, 10)
    assert len(contours["re"]) >= 10
    assert all(line.closed for line in contours["re"])
    uniform = dataclasses.replace(s, a=np.zeros_like(s.a))
    assert pp.flux_contours(uniform, 5) == {"re": [], "im": []}


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 0.7), st.floats(-1, 1), st.floats(-1, 1))
def test_iso_lines_of_cone_are_closed_circles(level, cx, cy):
    m = generate_rect_layout([Rect(-1, 1, -1, 1, Region.AIR)], 0.0625)
    center = np.array([0.1 * cx, 0.1 * cy])
    v = np.hypot(*(m.nodes - center).T)
    lines = pp.iso_lines(m.nodes, m.triangles, v, level)
    assert len(lines) == 1 and lines[0].closed
    radius = np.hypot(*(lines[0].points - center).T)
    # piecewise-linear interpolation of the cone: error O(h^2 / r)
    assert np.abs(radius - level).max() <= 0.0625**2 / level


def test_resonance_and_slope_on_analytic_circuit():
    R, L, C = 0.01, 1e-3, 1e-6
    f = np.logspace(1, 6, 201)
    w = TWO_PI * f
    Z = 1 / (1 / (R + 1j * w * L) + 1j * w * C)
    f0 = pp.find_resonances(f, Z)
    exact = pp.refine_phase_zero(lambda x: 1 / (1 / (R + 1j * TWO_PI * x * L) + 1j * TWO_PI * x * C),
                                 *pp.resonance_brackets(f, Z)[0], xtol=1e-12)
    ref = math.sqrt(1 / (L * C) - (R / L) ** 2) / TWO_PI
    assert len(f0) == 1 and exact == pytest.approx(ref, rel=1e-9)
    lo, hi = pp.resonance_brackets(f, Z)[0]
    assert lo < f0[0] < hi and lo < ref < hi
    assert pp.loglog_slope(f, np.abs(Z), 1e5, 1e6) == pytest.approx(-1, abs=0.02)
    assert pp.loglog_slope(f, np.abs(Z), 200.0, 400.0) == pytest.approx(1, abs=0.05)
    with pytest.raises(DomainError):
        pp.loglog_slope(f, np.abs(Z), 1.0, 2.0)
    assert pp.phase_crossings(f, Z) == [(lo, hi)]


def test_phase_range():
    assert pp.phase_deg(-1 + 0j) == 180.0
    assert pp.phase_deg(complex(-1, -0.0)) == 180.0
    assert pp.ImpedancePoint(1.0, complex(-1, -0.0)).phase == 180.0
    assert pp.ImpedancePoint(1.0, 1j).phase == 90.0


def test_sweep_csv(tmp_path, system):
    empty = pp.export_sweep_csv(tmp_path / "empty.csv", [], [])
    assert empty.read_text().splitlines() == [",".join(pp.SWEEP_HEADER)]
    res = sweep(system, [1.0, 10.0, 100.0])
    path = pp.export_sweep(tmp_path / "s.csv", res)
    assert len(path.read_text().splitlines()) == 4
    back = pp.read_csv(path)
    np.testing.assert_array_equal(back["f_hz"], res.frequencies)
    np.testing.assert_array_equal(back["z_re"], res.impedance.real)
    np.testing.assert_array_equal(back["z_im"], res.impedance.imag)
    assert list(back["status"]) == ["ok"] * 3
    failed = SweepResult(np.array([1.0, 2.0]), Model.CAPACITIVE, [res.solutions[0], None], {1: "x"})
    back = pp.read_csv(pp.export_sweep(tmp_path / "f.csv", failed))
    assert list(back["status"]) == ["ok", "failed"] and np.isnan(back["z_abs"][1])


def test_profile_and_contour_csv(tmp_path, system):
    s = solve_frequency(system, TWO_PI * 1e3)
    prof = pp.current_profiles(s)
    back = pp.read_csv(pp.export_profiles_csv(tmp_path / "p.csv", prof))
    np.testing.assert_array_equal(back["alpha_m"], prof.alpha)
    np.testing.assert_array_equal(back["i_cond_im"], prof.i_cond.imag)
    np.testing.assert_array_equal(back["phi_re"], prof.phi.real)
    contours = pp.flux_contours(s, 4)
    back = pp.read_csv(pp.export_contours_csv(tmp_path / "c.csv", contours))
    n_points = sum(len(l.points) for part in contours.values() for l in part)
    assert len(back["x_m"]) == n_points
    assert set(back["part"]) == {"re", "im"}
