"""Quantities derived from a solution: voltage function, current profiles,
terminal impedance, flux lines, resonances and CSV output."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, FoilWindingError
from .solver import Model, Solution, SweepResult, solve_frequency
from .winding import SlicePoints, slice_points

_EXT = np.clongdouble


def _check_alpha(solution: Solution, alpha) -> np.ndarray:
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    a, b = solution.system.winding.alpha_interval
    tol = 1e-12 * (b - a)
    if np.any(alpha < a - tol) or np.any(alpha > b + tol):
        raise DomainError(f"sample outside the winding interval [{a}, {b}]")
    return np.clip(alpha, a, b)


def default_samples(solution: Solution, n_uniform: int = 100) -> np.ndarray:
    """Greville abscissae of the spline basis merged with ``n_uniform`` uniform points."""
    basis = solution.system.basis
    a, b = basis.interval
    return np.unique(np.concatenate([basis.greville, np.linspace(a, b, n_uniform)]))


def voltage_profile(solution: Solution, alpha) -> np.ndarray:
    """Voltage drop per turn along the winding (V)."""
    alpha = _check_alpha(solution, alpha)
    return (solution.system.basis.values(alpha) @ solution.u).astype(complex)


def terminal_voltage(solution: Solution) -> complex:
    return complex(solution.system.P @ solution.u)


def impedance(solution: Solution) -> complex:
    if solution.current == 0:
        raise DomainError("impedance undefined for zero terminal current")
    return terminal_voltage(solution) / solution.current


def _slice_currents(solution: Solution, pts: SlicePoints):
    """Conductive and capacitive current through every slice in ``pts`` (extended precision)."""
    system = solution.system
    sym = system.symmetry
    basis = system.basis
    d_f = system.winding.d_f
    jw = 1j * solution.omega
    phi = (basis.values(pts.alpha) @ solution.u)[pts.slice_index]
    dphi = (basis.derivatives(pts.alpha) @ solution.u)[pts.slice_index]
    x = pts.coords[:, 0]
    loop = sym.path_length(x)
    a_nodes = solution.a[system.mesh.triangles[pts.triangle]]
    a_beta = np.einsum("pk,pk->p", pts.bary.astype(np.longdouble), a_nodes) / sym.radial_weight(x)
    i_cond = pts.slice_sum(pts.weight * d_f * system.tensors.sigma_par * (-jw * a_beta + phi / loop))
    eps = system.tensors.eps_hom
    i_cap = pts.slice_sum(pts.weight * jw * loop * eps * (0.5 * dphi + phi / d_f))
    return i_cond, i_cap


def conductive_current_profile(solution: Solution, alpha) -> np.ndarray:
    """Current along the turns through the slice at each ``alpha`` (A)."""
    alpha = _check_alpha(solution, alpha)
    pts = slice_points(solution.system.mesh, solution.system.winding, alpha)
    return _slice_currents(solution, pts)[0].astype(complex)


def capacitive_current_profile(solution: Solution, alpha) -> np.ndarray:
    """Displacement current across the insulation layers at each ``alpha`` (A).

    Zero for the resistive-inductive model, which has no capacitive term.
    """
    alpha = _check_alpha(solution, alpha)
    if solution.model is Model.STANDARD:
        return np.zeros(len(alpha), dtype=complex)
    pts = slice_points(solution.system.mesh, solution.system.winding, alpha)
    return _slice_currents(solution, pts)[1].astype(complex)


@dataclass(frozen=True)
class CurrentProfiles:
    alpha: np.ndarray
    phi: np.ndarray
    i_cond: np.ndarray
    i_cap: np.ndarray
    current: complex

    def sum_error(self) -> np.ndarray:
        """``|I_cond + I_cap - I| / |I|`` at every sample."""
        return np.abs(self.i_cond + self.i_cap - self.current) / abs(self.current)


def current_profiles(solution: Solution, alpha=None) -> CurrentProfiles:
    alpha = default_samples(solution) if alpha is None else _check_alpha(solution, alpha)
    pts = slice_points(solution.system.mesh, solution.system.winding, alpha)
    i_cond, i_cap = _slice_currents(solution, pts)
    if solution.model is Model.STANDARD:
        i_cap = np.zeros_like(i_cap)
    return CurrentProfiles(alpha, voltage_profile(solution, alpha), i_cond.astype(complex),
                           i_cap.astype(complex), solution.current)


def projected_current_residual(solution: Solution) -> np.ndarray:
    """Spline projections ``(1/d_f) int xi_i (I_cond + I_cap - I) dalpha``.

    Evaluated from the current profiles on the assembly quadrature and
    normalized by ``|P| |I|``; independent of the solver's own residual.
    """
    system = solution.system
    q = system.quadrature
    i_cond, i_cap = _slice_currents(solution, q.points)
    if solution.model is Model.STANDARD:
        i_cap = np.zeros_like(i_cap)
    xi = system.basis.values(q.alpha)
    defect = i_cond + i_cap - _EXT(solution.current)
    proj = (xi * (q.alpha_weight / system.winding.d_f)[:, None]).T.astype(np.longdouble) @ defect
    scale = np.linalg.norm(system.P) * abs(solution.current)
    return (proj / scale).astype(complex)


@dataclass(frozen=True)
class ImpedancePoint:
    f: float
    Z: complex

    @property
    def magnitude(self) -> float:
        return abs(self.Z)

    @property
    def phase(self) -> float:
        """Phase in degrees, in (-180, 180]."""
        deg = math.degrees(math.atan2(self.Z.imag, self.Z.real))
        return 180.0 if deg <= -180.0 else deg


def impedance_points(result: SweepResult) -> list[ImpedancePoint]:
    return [ImpedancePoint(float(f), complex(z)) for f, z in zip(result.frequencies, result.impedance)]


def phase_deg(Z) -> np.ndarray:
    deg = np.degrees(np.angle(np.asarray(Z, dtype=complex)))
    return np.where(deg <= -180.0, 180.0, deg)


# ---------------------------------------------------------------------------
# resonances and slopes
# ---------------------------------------------------------------------------

def resonance_brackets(frequencies, Z, kind: str = "parallel") -> list[tuple[float, float]]:
    """Sample pairs between which the phase passes through zero.

    ``kind="parallel"`` selects downward crossings (inductive to capacitive,
    an impedance maximum), ``"series"`` upward ones (an impedance minimum).
    Samples with NaN impedance are skipped.
    """
    if kind not in ("parallel", "series"):
        raise DomainError(f"unknown resonance kind {kind!r}")
    f = np.asarray(frequencies, dtype=float)
    ph = phase_deg(Z)
    ok = np.isfinite(ph)
    f, ph = f[ok], ph[ok]
    if kind == "series":
        ph = -ph
    return [(f[k], f[k + 1]) for k in range(len(f) - 1)
            if ph[k] > 0.0 >= ph[k + 1] and ph[k] - ph[k + 1] < 180.0 + 1e-9]


def find_resonances(frequencies, Z, kind: str = "parallel") -> np.ndarray:
    """Phase zero crossings of the given kind, located by log-linear interpolation."""
    f = np.asarray(frequencies, dtype=float)
    ph = phase_deg(Z)
    out = []
    for a, b in resonance_brackets(f, Z, kind):
        pa, pb = ph[f == a][0], ph[f == b][0]
        t = pa / (pa - pb)
        out.append(math.exp((1 - t) * math.log(a) + t * math.log(b)))
    return np.asarray(out)


def phase_crossings(frequencies, Z, high: float = 60.0, low: float = -60.0) -> list[tuple[float, float]]:
    """Brackets ``(f_a, f_b)`` where the phase goes from above ``high`` to below ``low``
    with no samples in between, i.e. a sharp inductive-to-capacitive transition."""
    f = np.asarray(frequencies, dtype=float)
    ph = phase_deg(Z)
    return [(f[k], f[k + 1]) for k in range(len(f) - 1)
            if ph[k] >= high and ph[k + 1] <= low]


def refine_phase_zero(impedance_at: Callable[[float], complex], f_lo: float, f_hi: float,
                      xtol: float = 1e-6) -> float:
    """Zero of the phase of ``impedance_at(f)`` in ``[f_lo, f_hi]`` by Brent's method on log f."""
    def phase(logf):
        z = impedance_at(math.exp(logf))
        return math.atan2(z.imag, z.real)

    lo, hi = math.log(f_lo), math.log(f_hi)
    if not phase(lo) * phase(hi) < 0:
        raise DomainError("bracket does not contain a phase zero crossing")
    return math.exp(brentq(phase, lo, hi, xtol=xtol))


def refine_resonance(system, f_lo: float, f_hi: float, model: Model = Model.CAPACITIVE,
                     xtol: float = 1e-6) -> float:
    """Resonance of the field model inside a bracket from :func:`resonance_brackets`."""
    return refine_phase_zero(
        lambda f: solve_frequency(system, 2.0 * math.pi * f, model=model).impedance,
        f_lo, f_hi, xtol)


def loglog_slope(frequencies, magnitude, f_lo: float, f_hi: float) -> float:
    """Least-squares slope of ``log|Z|`` against ``log f`` over ``[f_lo, f_hi]``."""
    f = np.asarray(frequencies, dtype=float)
    m = np.asarray(magnitude, dtype=float)
    sel = (f >= f_lo) & (f <= f_hi) & np.isfinite(m) & (m > 0)
    if sel.sum() < 2:
        raise DomainError("fewer than two samples in the slope band")
    return float(np.polyfit(np.log(f[sel]), np.log(m[sel]), 1)[0])


# ---------------------------------------------------------------------------
# flux lines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Polyline:
    level: float
    points: np.ndarray
    closed: bool


def contour_levels(values, n_levels: int) -> np.ndarray:
    lo, hi = float(np.min(values)), float(np.max(values))
    if not hi > lo:
        return np.zeros(0)
    return lo + (hi - lo) * np.arange(1, n_levels + 1) / (n_levels + 1)


def iso_lines(nodes: np.ndarray, triangles: np.ndarray, values: np.ndarray,
              level: float) -> list[Polyline]:
    """Marching-triangles iso-lines of a piecewise linear field, chained into polylines.

    A vertex exactly at ``level`` counts as above it, so every crossed triangle
    contributes exactly one segment and the chaining is unambiguous.
    """
    v = values[triangles]
    above = v >= level
    n_above = above.sum(axis=1)
    cut = np.nonzero((n_above == 1) | (n_above == 2))[0]
    if len(cut) == 0:
        return []
    adjacency: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    position: dict[tuple[int, int], np.ndarray] = {}
    for t in cut:
        keys = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            if above[t, i] != above[t, j]:
                a, b = int(triangles[t, i]), int(triangles[t, j])
                key = (a, b) if a < b else (b, a)
                if key not in position:
                    va, vb = values[key[0]], values[key[1]]
                    s = (level - va) / (vb - va)
                    position[key] = nodes[key[0]] + s * (nodes[key[1]] - nodes[key[0]])
                keys.append(key)
        k0, k1 = keys
        adjacency[k0].append(k1)
        adjacency[k1].append(k0)

    visited: set = set()
    lines = []
    # open chains start at edge crossings with a single neighbor (domain boundary)
    starts = [k for k, nb in adjacency.items() if len(nb) == 1]
    starts += [k for k in adjacency if len(adjacency[k]) != 1]
    for start in starts:
        if start in visited:
            continue
        chain = [start]
        visited.add(start)
        prev, cur = None, start
        while True:
            nxt = [k for k in adjacency[cur] if k != prev and k not in visited]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
            visited.add(cur)
        closed = len(chain) > 2 and start in adjacency[chain[-1]] and len(adjacency[start]) == 2
        pts = np.array([position[k] for k in chain])
        if closed:
            pts = np.vstack([pts, pts[:1]])
        lines.append(Polyline(level, pts, closed))
    return lines


def flux_contours(solution: Solution, n_levels: int = 20) -> dict[str, list[Polyline]]:
    """Flux lines of the real and imaginary part of the nodal potential.

    In axisymmetric models the nodal unknown ``r A_phi`` is the flux function
    itself, so its iso-lines are field lines in both symmetry modes.
    """
    mesh = solution.system.mesh
    a = solution.a.astype(complex)
    out = {}
    for part, field in (("re", a.real), ("im", a.imag)):
        lines = []
        for level in contour_levels(field, n_levels):
            lines.extend(iso_lines(mesh.nodes, mesh.triangles, field, level))
        out[part] = lines
    return out


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

SWEEP_HEADER = ["f_hz", "z_re", "z_im", "z_abs", "phase_deg", "status"]
PROFILE_HEADER = ["alpha_m", "phi_re", "phi_im", "i_cond_re", "i_cond_im", "i_cap_re", "i_cap_im"]
CONTOUR_HEADER = ["part", "polyline_id", "level", "closed", "x_m", "y_m"]


def fmt_float(x) -> str:
    return repr(float(x))


def open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc


def export_sweep_csv(path, frequencies: Sequence[float], Z: Iterable[complex],
                     failures: dict | None = None) -> Path:
    failures = failures or {}
    with open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for k, (f, z) in enumerate(zip(frequencies, Z)):
            z = complex(z)
            status = "failed" if k in failures else "ok"
            w.writerow([fmt_float(f), fmt_float(z.real), fmt_float(z.imag), fmt_float(abs(z)),
                        fmt_float(phase_deg(z)), status])
    return Path(path)


def export_sweep(path, result: SweepResult) -> Path:
    return export_sweep_csv(path, result.frequencies, result.impedance, result.failures)


def export_profiles_csv(path, profiles: CurrentProfiles) -> Path:
    with open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for a, p, c, d in zip(profiles.alpha, profiles.phi, profiles.i_cond, profiles.i_cap):
            w.writerow([fmt_float(a), fmt_float(p.real), fmt_float(p.imag), fmt_float(c.real), fmt_float(c.imag),
                        fmt_float(d.real), fmt_float(d.imag)])
    return Path(path)


def export_contours_csv(path, contours: dict[str, list[Polyline]]) -> Path:
    with open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONTOUR_HEADER)
        for part in sorted(contours):
            for pid, line in enumerate(contours[part]):
                for x, y in line.points:
                    w.writerow([part, pid, fmt_float(line.level), int(line.closed), fmt_float(x), fmt_float(y)])
    return Path(path)


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a file written by the exporters; numeric columns as float arrays."""
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise FoilWindingError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in body]
        try:
            out[name] = np.array([float(c) for c in col])
        except ValueError:
            out[name] = np.array(col, dtype=object)
    return out
