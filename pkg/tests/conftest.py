import functools

import numpy as np
import pytest

from foilwinding.assembly import Material, assemble_system
from foilwinding.bspline import BSplineBasis
from foilwinding.homogenization import EPS0, NU0, FoilMaterials, mix
from foilwinding.layouts import cartesian_box, pot_inductor, window_stack
from foilwinding.mesh import Region

SIGMA_C = 60e6
EPS_I = 10 * EPS0
MU_YOKE = 1000.0

MATERIALS = {Region.AIR: Material(NU0), Region.YOKE: Material(NU0 / MU_YOKE)}


def tensors_for(winding):
    return mix(FoilMaterials(NU0, NU0, SIGMA_C, EPS0, EPS_I, winding.fill_factor))


def build(layout, h, n_splines, winding_h=None, eps_hom=None):
    mesh = layout.mesh(h, winding_h)
    w = layout.winding
    basis = BSplineBasis(n_splines, w.alpha_interval)
    return assemble_system(mesh, layout.symmetry, w, basis, tensors_for(w), MATERIALS,
                           eps_hom=eps_hom)


@functools.lru_cache(maxsize=None)
def cartesian_system(h=1e-3, n_splines=10, winding_h=None):
    return build(cartesian_box(), h, n_splines, winding_h)


@functools.lru_cache(maxsize=None)
def pot_system(h=1e-3, n_splines=7):
    return build(pot_inductor(), h, n_splines)


@functools.lru_cache(maxsize=None)
def stack_system(h=1e-3, n_splines=10, turns=10):
    return build(window_stack(turns=turns), h, n_splines)


@pytest.fixture(scope="session")
def cart_coarse():
    return cartesian_system()


@pytest.fixture(scope="session")
def pot_coarse():
    return pot_system()


def rel_asym(A):
    if hasattr(A, "tocsr"):
        A = A.tocsr()
        scale = abs(A).max()
        diff = abs(A - A.T).max()
    else:
        A = np.asarray(A)
        scale = np.abs(A).max()
        diff = np.abs(A - A.T).max()
    return 0.0 if scale == 0 else float(diff / scale)


CRITERIA_LINES: list[str] = []


def record_criterion(number, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
