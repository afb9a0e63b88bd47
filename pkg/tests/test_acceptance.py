"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""
import gc
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import (EPS_I, MATERIALS, SIGMA_C, build, record_criterion, rel_asym)
from foilwinding import oracle
from foilwinding import postprocess as pp
from foilwinding.assembly import Material, assemble_system
from foilwinding.bspline import BSplineBasis
from foilwinding.homogenization import NU0
from foilwinding.layouts import cartesian_box, pot_inductor, resolve_turns, window_stack
from foilwinding.mesh import Region
from foilwinding.solver import Model, solve_frequency, sweep

TWO_PI = 2 * math.pi
POT_H = 0.7e-3              # 41 216 elements
CART_H = 0.3125e-3          # 24 576 elements
CART_WINDING_H = 0.078125e-3
DESK_H = 0.5e-3
SWEEP = np.logspace(-2, 6, 81)


@pytest.fixture(scope="module")
def pot():
    return build(pot_inductor(), POT_H, 7)


@pytest.fixture(scope="module")
def pot_sweeps(pot):
    return {m: sweep(pot, SWEEP, model=m) for m in Model}


@pytest.fixture(scope="module")
def cart():
    return build(cartesian_box(), CART_H, 10)


def test_criterion_1_dc_resistance():
    t0 = time.perf_counter()
    system = build(cartesian_box(), CART_H, 10)
    z = solve_frequency(system, TWO_PI * 1e-3).impedance
    elapsed = time.perf_counter() - t0
    r = oracle.dc_resistance(system.winding, system.symmetry, SIGMA_C)
    err = abs(abs(z) - 6.58) / 6.58
    ok = err <= 0.02 and elapsed < 60 and 15_000 <= system.mesh.n_triangles <= 30_000
    record_criterion(1, ok, f"|Z(1 mHz)|={abs(z):.5f} Ohm (analytic {r:.5f}), error {err:.2e}, "
                            f"{system.mesh.n_triangles} elements, {elapsed:.1f} s")
    assert ok


def test_criterion_2_low_frequency_agreement(pot, pot_sweeps):
    sel = SWEEP <= 1e3
    zs = np.abs(pot_sweeps[Model.STANDARD].impedance[sel])
    zc = np.abs(pot_sweeps[Model.CAPACITIVE].impedance[sel])
    diff = np.max(np.abs(zs / zc - 1))
    ok = diff < 0.01 and pot_sweeps[Model.STANDARD].ok and pot_sweeps[Model.CAPACITIVE].ok
    record_criterion(2, ok, f"max |Z| difference for f <= 1 kHz: {diff:.2e} "
                            f"({sel.sum()} frequencies, {pot.mesh.n_triangles} elements)")
    assert ok


def test_criterion_3_first_resonance(pot, pot_sweeps):
    zc = pot_sweeps[Model.CAPACITIVE].impedance
    zs = pot_sweeps[Model.STANDARD].impedance
    brackets = pp.resonance_brackets(SWEEP, zc)
    assert brackets, "no inductive-to-capacitive crossing"
    lo, hi = brackets[0]
    f_res = pp.refine_resonance(pot, lo, hi)
    ph = pp.phase_deg(zc)
    before, after = ph[SWEEP == lo][0], ph[SWEEP == hi][0]
    std_crossings = pp.resonance_brackets(SWEEP, zs) + pp.resonance_brackets(SWEEP, zs, "series")
    ok = (abs(f_res / 29e3 - 1) <= 0.2 and before > 60 and after < -60 and not std_crossings)
    record_criterion(3, ok, f"capacitive resonance {f_res / 1e3:.2f} kHz, phase {before:+.1f} deg "
                            f"-> {after:+.1f} deg; standard-model crossings: {len(std_crossings)}")
    assert ok


def _impedance_minimum(system, f_lo, f_hi):
    res = minimize_scalar(lambda x: abs(solve_frequency(system, TWO_PI * 10 ** x).impedance),
                          bounds=(math.log10(f_lo), math.log10(f_hi)), method="bounded",
                          options={"xatol": 1e-6})
    return 10 ** res.x


@pytest.mark.xfail(strict=True, reason="resonances are less than a decade apart; see decisions ledger")
def test_criterion_4_post_resonance_slopes(pot, pot_sweeps):
    zc = pot_sweeps[Model.CAPACITIVE].impedance
    zs = pot_sweeps[Model.STANDARD].impedance
    lo, hi = pp.resonance_brackets(SWEEP, zc)[0]
    f1 = pp.refine_resonance(pot, lo, hi)
    mag = np.abs(zc)
    # second resonance: first local impedance minimum above f1
    k = next(i for i in range(1, len(SWEEP) - 1)
             if SWEEP[i] > f1 and mag[i] < mag[i - 1] and mag[i] < mag[i + 1])
    f2 = _impedance_minimum(pot, SWEEP[k - 1], SWEEP[k + 1])
    band = (1.1 * f1, f2 / 1.1)
    dense = np.logspace(*np.log10(band), 25)
    cap = pp.loglog_slope(dense, [abs(solve_frequency(pot, TWO_PI * f).impedance) for f in dense], *band)
    std = pp.loglog_slope(dense, [abs(solve_frequency(pot, TWO_PI * f, model=Model.STANDARD).impedance)
                                  for f in dense], *band)
    width = math.log10(band[1] / band[0])
    tail = pp.loglog_slope(SWEEP, mag, 4e5, 1e6)
    ok = abs(cap + 1) <= 0.1 and abs(std - 1) <= 0.1 and width >= 1.0
    record_criterion(4, ok, f"f1={f1 / 1e3:.1f} kHz, f2={f2 / 1e3:.1f} kHz, band {width:.2f} decades; "
                            f"slopes capacitive {cap:+.3f}, standard {std:+.3f} "
                            f"(capacitive 400 kHz-1 MHz: {tail:+.3f})")
    assert ok


def _regime_frequencies(system):
    """Low, mid and high test frequencies from the inductive corner and the first resonance."""
    r_dc = oracle.dc_resistance(system.winding, system.symmetry, SIGMA_C)
    w = TWO_PI * 1.0
    inductance = solve_frequency(system, w).impedance.imag / w
    f_corner = r_dc / (TWO_PI * inductance)
    grid = np.logspace(2, 6, 41)
    z = sweep(system, grid).impedance
    f_res = pp.refine_resonance(system, *pp.resonance_brackets(grid, z)[0])
    return f_corner / 10, math.sqrt(f_corner * f_res), 2 * f_res


def test_criterion_5_current_condition(pot, pot_sweeps, cart):
    worst_projection = 0.0
    for res in pot_sweeps.values():
        for s in res.solutions:
            worst_projection = max(worst_projection, np.abs(pp.projected_current_residual(s)).max())
    low, mid, high = _regime_frequencies(cart)
    fine = build(cartesian_box(), CART_H, 10, winding_h=CART_WINDING_H)
    interior = fine.basis.greville[1:-1]
    worst_point, worst_end, signatures = 0.0, 0.0, []
    alpha = np.linspace(*fine.winding.alpha_interval, 201)
    for f in (low, mid, high):
        s = solve_frequency(fine, TWO_PI * f)
        worst_projection = max(worst_projection, np.abs(pp.projected_current_residual(s)).max())
        prof = pp.current_profiles(s, fine.basis.greville)
        err = prof.sum_error()
        worst_point = max(worst_point, err[1:-1].max())
        worst_end = max(worst_end, err[[0, -1]].max())
        phi = pp.voltage_profile(s, alpha)
        signatures.append((np.linalg.norm(phi.real), np.linalg.norm(phi.imag), phi.imag.min(), phi.imag.max()))
    (lr, li, _, _), (mr, mi, mmin, _), (hr, hi_, _, hmax) = signatures
    regimes = lr > li and mi > mr and mmin > 0 and hi_ > hr and hmax < 0
    ok = worst_projection <= 1e-10 and worst_point <= 0.02 and regimes
    record_criterion(5, ok, f"projected residual max {worst_projection:.1e} over "
                            f"{2 * len(SWEEP) + 3} solves; pointwise sum error at interior Greville "
                            f"points {worst_point:.2%} (winding ends {worst_end:.2%}) at "
                            f"{low:.3g}/{mid:.3g}/{high:.3g} Hz on {fine.mesh.n_triangles} elements; "
                            f"regime signatures {'hold' if regimes else 'violated'}")
    del fine
    gc.collect()
    assert ok


def test_criterion_6_ladder_cross_validation():
    layout = resolve_turns(window_stack(turns=10))
    mesh = layout.mesh(DESK_H)
    w = layout.winding
    mats = {**MATERIALS, Region.FOIL_WINDING: Material(NU0)}
    net = oracle.build_ladder(mesh, w, layout.symmetry, SIGMA_C, EPS_I, mats)
    from conftest import tensors_for
    system = assemble_system(mesh, layout.symmetry, w, BSplineBasis(10, w.alpha_interval),
                             tensors_for(w), MATERIALS)
    f_corner = net.R.sum() / (TWO_PI * net.L.sum())
    band = np.logspace(-2, math.log10(10 * f_corner), 25)
    z_hom = sweep(system, band).impedance
    z_lad = np.array([oracle.ladder_impedance(net, TWO_PI * f) for f in band])
    mag_err = np.max(np.abs(np.abs(z_hom) / np.abs(z_lad) - 1))
    grid = np.logspace(4, 7, 31)
    zh = sweep(system, grid).impedance
    zl = np.array([oracle.ladder_impedance(net, TWO_PI * f) for f in grid])
    f_hom = pp.refine_resonance(system, *pp.resonance_brackets(grid, zh)[0])
    f_lad = pp.refine_phase_zero(lambda f: oracle.ladder_impedance(net, TWO_PI * f),
                                 *pp.resonance_brackets(grid, zl)[0])
    ratio = f_hom / f_lad
    ok = mag_err <= 0.05 and abs(ratio - 1) <= 0.10
    record_criterion(6, ok, f"|Z| max deviation {mag_err:.2%} up to {10 * f_corner:.0f} Hz; "
                            f"first resonance homogenized {f_hom / 1e3:.1f} kHz vs ladder "
                            f"{f_lad / 1e3:.1f} kHz (ratio {ratio:.3f})")
    assert ok


def _min_eig(A):
    A = A.tocsr()
    active = np.unique(A.nonzero()[0])
    if len(active) == 0:
        return 0.0, 0.0
    dense = A[active][:, active].toarray()
    lam = np.linalg.eigvalsh(0.5 * (dense + dense.T))
    return lam.min(), np.abs(lam).max()


def test_criterion_7_matrix_properties(pot, cart):
    worst_asym, worst_eig, identical = 0.0, 0.0, True
    for system in (cart, pot):
        for name in ("K", "M", "G", "C_volt"):
            worst_asym = max(worst_asym, rel_asym(getattr(system, name)))
        for name in ("M", "G", "C_volt"):
            lo, scale = _min_eig(getattr(system, name))
            worst_eig = min(worst_eig, lo / scale if scale else 0.0)
        flat = assemble_system(system.mesh, system.symmetry, system.winding, system.basis,
                               system.tensors, MATERIALS, eps_hom=0.0)
        identical &= flat.C_grad.count_nonzero() == 0 and flat.C_volt.count_nonzero() == 0
        for name in ("K", "M", "X", "G"):
            identical &= (getattr(flat, name) != getattr(system, name)).nnz == 0
        identical &= np.array_equal(flat.P, system.P) and np.array_equal(flat.js, system.js)
    ok = worst_asym <= 1e-12 and worst_eig >= -1e-12 and identical
    record_criterion(7, ok, f"max relative asymmetry {worst_asym:.1e}; min eigenvalue/norm "
                            f"{worst_eig:.1e}; zero-permittivity system identical: {identical}")
    assert ok


def test_criterion_8_bspline_suite():
    rng = np.random.default_rng(8)
    pou, dsum = 0.0, 0.0
    for n in (3, 4, 7, 10, 25):
        basis = BSplineBasis(n, (-0.005, 0.005))
        alpha = np.concatenate([rng.uniform(-0.005, 0.005, 1000), basis.breakpoints])
        pou = max(pou, np.abs(basis.values(alpha).sum(axis=1) - 1).max())
        dsum = max(dsum, np.abs(basis.derivatives(alpha).sum(axis=1)).max())
    seven = BSplineBasis(7, (-1.0, 1.0)).knots
    expected = np.array([-1, -1, -1, -0.6, -0.2, 0.2, 0.6, 1, 1, 1])
    knots_ok = np.array_equal(seven, np.linspace(-1, 1, 6)[[0, 0, 0, 1, 2, 3, 4, 5, 5, 5]]) and \
        np.allclose(seven, expected, rtol=0, atol=1e-15)
    ok = pou <= 1e-14 and dsum <= 1e-12 and knots_ok
    record_criterion(8, ok, f"partition of unity {pou:.1e}; derivative sum {dsum:.1e}; "
                            f"n=7 knots {np.round(seven, 12).tolist()}")
    assert ok


def test_criterion_9_convergence(pot):
    f = 1e3
    z_ref = solve_frequency(pot, TWO_PI * f).impedance
    fine = build(pot_inductor(), POT_H / 2, 7)
    z_fine = solve_frequency(fine, TWO_PI * f).impedance
    n_fine = fine.mesh.n_triangles
    del fine
    gc.collect()
    more = assemble_system(pot.mesh, pot.symmetry, pot.winding, BSplineBasis(10, pot.winding.alpha_interval),
                           pot.tensors, MATERIALS)
    z_more = solve_frequency(more, TWO_PI * f).impedance
    d_mesh = abs(abs(z_fine) / abs(z_ref) - 1)
    d_spline = abs(abs(z_more) / abs(z_ref) - 1)
    ok = d_mesh < 0.01 and d_spline < 0.005
    record_criterion(9, ok, f"at {f:.0f} Hz: mesh {pot.mesh.n_triangles}->{n_fine} elements changes "
                            f"|Z| by {d_mesh:.2%}; splines 7->10 by {d_spline:.1e}")
    assert ok
