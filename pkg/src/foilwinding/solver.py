"""Frequency-domain solution of the coupled field / voltage-function system."""
from __future__ import annotations

import enum
import logging
import math
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem
from .errors import ConfigError, SolverError
from .homogenization import MU0, skin_depth

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class Model(enum.Enum):
    STANDARD = "standard"
    CAPACITIVE = "capacitive"


@dataclass(frozen=True)
class CurrentDrive:
    current: complex = 1.0

    def __post_init__(self):
        if self.current == 0:
            raise ConfigError("drive current must be nonzero", "drive")


@dataclass(frozen=True)
class VoltageDrive:
    voltage: complex = 1.0

    def __post_init__(self):
        if self.voltage == 0:
            raise ConfigError("drive voltage must be nonzero", "drive")


Drive = Union[CurrentDrive, VoltageDrive]


@dataclass(frozen=True, eq=False)
class Solution:
    """Solved coefficients at one angular frequency.

    ``a`` covers every mesh node (eliminated nodes are exactly zero);
    ``u`` holds the spline coefficients of the voltage function.
    """

    a: np.ndarray
    u: np.ndarray
    omega: float
    drive: Drive
    model: Model
    voltage: complex
    current: complex
    residual: float
    system: AssembledSystem = field(repr=False)

    @property
    def frequency(self) -> float:
        return self.omega / (2.0 * math.pi)

    @property
    def impedance(self) -> complex:
        return self.voltage / self.current


class BlockSolver:
    """Keeps the Dirichlet-reduced blocks of one system for repeated solves."""

    def __init__(self, system: AssembledSystem):
        # weak reference: the solver cache is keyed on the system
        self._system = weakref.ref(system)
        self.n_nodes = system.mesh.n_nodes
        free = system.free
        self.free = free

        def reduce(mat):
            return mat.tocsr()[free][:, free].tocsc()

        self.K = reduce(system.K)
        self.M = reduce(system.M)
        self.X = system.X.tocsr()[free].tocsc()
        self.G = system.G.tocsc()
        self.C = (system.C_grad + system.C_volt).tocsc()
        self.P = np.asarray(system.P, dtype=float)
        self.js = np.asarray(system.js)[free]

    def matrix(self, omega: float, model: Model, bordered: bool = False) -> sp.csc_matrix:
        jw = 1j * omega
        a22 = self.G + jw * self.C if model is Model.CAPACITIVE else self.G.astype(complex)
        blocks = [[self.K + jw * self.M, -self.X], [-jw * self.X.T, a22]]
        if bordered:
            p = sp.csc_matrix(self.P.reshape(-1, 1))
            n_a = self.K.shape[0]
            blocks[0].append(None)
            blocks[1].append(-p)
            blocks.append([sp.csc_matrix((1, n_a)), p.T, None])
        return sp.bmat(blocks, format="csc").astype(complex)

    def solve(self, omega: float, drive: Drive, model: Model = Model.CAPACITIVE,
              max_refine: int = 8) -> Solution:
        """Eliminate the field block and solve the small winding system densely.

        With ``A11 = K + jwM`` factored once, ``a = A11^-1 (js + X u)`` and the
        winding rows reduce to an ``n_u x n_u`` Schur complement system.  The
        coupled residual is then driven down by iterative refinement that
        reuses both factorizations.
        """
        if omega < 0 or not np.isfinite(omega):
            raise ConfigError(f"angular frequency must be finite and non-negative, got {omega}")
        jw = 1j * omega
        ext = np.clongdouble
        A11 = (self.K + jw * self.M).astype(complex).tocsc()
        field = _FieldFactor(A11)
        Xd = self.X.toarray()
        Wx = field.solve(Xd.astype(complex)).astype(ext)
        for _ in range(2):
            # extended-precision residual; keeps the Schur complement accurate
            # when it is nearly singular (at a parallel resonance)
            Wx += field.solve((Xd - self.K @ Wx - jw * (self.M @ Wx)).astype(complex))
        A22 = self.G.toarray().astype(ext)
        if model is Model.CAPACITIVE:
            A22 = A22 + jw * self.C.toarray().astype(ext)
        XT = self.X.T.tocsr()
        n_u = len(self.P)
        voltage_driven = isinstance(drive, VoltageDrive)
        S = A22 - jw * (XT @ Wx)
        if voltage_driven:
            B = np.zeros((n_u + 1, n_u + 1), dtype=ext)
            B[:n_u, :n_u] = S
            B[:n_u, n_u] = -self.P
            B[n_u, :n_u] = self.P
            lu_small = _ExtLU(B)
        else:
            lu_small = _ExtLU(S)

        def correct(r1, r2, r3):
            # block elimination of [[A11, -X, 0], [-jw X^T, A22, -P], [0, P^T, 0]]
            d0 = field.solve(r1.astype(complex))
            rhs = r2 + jw * (XT @ d0)
            if voltage_driven:
                y = lu_small.solve(np.concatenate([rhs, [r3]]))
                du, dI = y[:n_u], y[n_u]
            else:
                du, dI = lu_small.solve(rhs), 0.0
            return d0 + Wx @ du, du, dI

        # mixed precision: corrections from the double field factorization,
        # residuals and iterates in extended precision so that the cancelling
        # terms of the winding rows do not limit the attainable residual
        current = ext(0.0) if voltage_driven else ext(drive.current)
        a = np.zeros(len(self.free), dtype=ext)
        u = np.zeros(n_u, dtype=ext)
        best = None
        stalled = 0
        for _ in range(max_refine + 1):
            r1, r2, r3 = self._residuals(jw, A22, a, u, current, drive)
            rel = self._relative(jw, A22, a, u, current, r1, r2, r3, drive)
            if best is None or rel < best[0]:
                best = (rel, a, u, current)
                stalled = 0
            else:
                stalled += 1
                if stalled > 2:
                    break
            if rel <= 1e-15:
                break
            da, du, dI = correct(r1, r2, r3)
            a, u, current = a + da, u + du, current + dI
        rel, a, u, current = best
        if not np.isfinite(rel) or rel > RESIDUAL_TOL:
            raise SolverError(f"linear solve did not converge (relative residual {rel:.3e})",
                              residual=rel)
        voltage = complex(drive.voltage) if voltage_driven else complex(self.P @ u)
        a_full = np.zeros(self.n_nodes, dtype=ext)
        a_full[self.free] = a
        return Solution(a_full, u, omega, drive, model, voltage, complex(current), rel,
                        self.system)

    @property
    def system(self) -> AssembledSystem:
        system = self._system()
        if system is None:
            raise SolverError("the assembled system of this solver no longer exists")
        return system

    def _residuals(self, jw, A22, a, u, current, drive):
        r1 = self.js - (self.K @ a + jw * (self.M @ a)) + self.X @ u
        r2 = self.P * current - (A22 @ u - jw * (self.X.T @ a))
        r3 = drive.voltage - self.P @ u if isinstance(drive, VoltageDrive) else np.clongdouble(0)
        return r1, r2, r3

    def _relative(self, jw, A22, a, u, current, r1, r2, r3=0.0, drive=None) -> float:
        """Normwise backward error of every row block (residual over the size of its terms)."""
        a = np.abs(a.astype(complex))
        u = np.abs(u.astype(complex))
        s1 = (np.linalg.norm(abs(self.K) @ a) + abs(jw) * np.linalg.norm(abs(self.M) @ a)
              + np.linalg.norm(abs(self.X) @ u) + np.linalg.norm(self.js))
        s2 = (np.linalg.norm(np.abs(A22.astype(complex)) @ u) + abs(jw) * np.linalg.norm(abs(self.X).T @ a)
              + np.linalg.norm(self.P) * abs(complex(current)))
        rel1 = _norm(r1) / s1 if s1 > 0 else 0.0
        rel2 = _norm(r2) / s2 if s2 > 0 else 0.0
        rel3 = 0.0
        if isinstance(drive, VoltageDrive):
            rel3 = abs(complex(r3)) / (abs(drive.voltage) + np.linalg.norm(self.P) * np.linalg.norm(u))
        return float(max(rel1, rel2, rel3))

    def current_residual(self, solution: Solution) -> np.ndarray:
        """Residual of the winding rows relative to ``|P| |I|``."""
        a = solution.a[self.free]
        jw = 1j * solution.omega
        r = -jw * (self.X.T @ a) + self.G @ solution.u - self.P * solution.current
        if solution.model is Model.CAPACITIVE:
            r = r + jw * (self.C @ solution.u)
        return r / (np.linalg.norm(self.P) * abs(solution.current))


def _norm(v) -> float:
    return float(np.sqrt(np.sum(np.abs(v) ** 2)))


class _ExtLU:
    """Partial-pivoting LU of a small dense matrix in extended precision.

    LAPACK offers no long-double routines; the winding system has only as many
    rows as splines, so a plain elimination loop is cheap.
    """

    def __init__(self, A: np.ndarray):
        LU = np.array(A, dtype=np.clongdouble)
        n = LU.shape[0]
        piv = np.arange(n)
        scale = np.abs(LU).max() if n else 1.0
        for k in range(n):
            p = k + int(np.argmax(np.abs(LU[k:, k])))
            if not abs(LU[p, k]) > 1e-30 * scale:
                raise SolverError("winding system is singular")
            if p != k:
                LU[[k, p]] = LU[[p, k]]
                piv[[k, p]] = piv[[p, k]]
            LU[k + 1:, k] /= LU[k, k]
            LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
        if not np.all(np.isfinite(LU)):
            raise SolverError("winding system is singular")
        self.LU, self.piv = LU, piv

    def solve(self, b: np.ndarray) -> np.ndarray:
        LU = self.LU
        n = LU.shape[0]
        y = np.asarray(b, dtype=np.clongdouble)[self.piv].copy()
        for k in range(n):
            y[k + 1:] -= LU[k + 1:, k] * y[k]
        for k in range(n - 1, -1, -1):
            y[k] = (y[k] - LU[k, k + 1:] @ y[k + 1:]) / LU[k, k]
        return y


class _FieldFactor:
    """Sparse LU of the field block with symmetric diagonal scaling."""

    def __init__(self, A: sp.csc_matrix):
        d = np.sqrt(abs(A.diagonal()))
        d[d == 0] = 1.0
        self.d = d
        D = sp.diags(1.0 / d)
        try:
            self.lu = spla.splu((D @ A @ D).tocsc())
        except RuntimeError as exc:
            raise SolverError(f"factorization of the field block failed: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        d = self.d if b.ndim == 1 else self.d[:, None]
        return self.lu.solve(b / d) / d


_solvers: "weakref.WeakKeyDictionary[AssembledSystem, BlockSolver]" = weakref.WeakKeyDictionary()


def block_solver(system: AssembledSystem) -> BlockSolver:
    solver = _solvers.get(system)
    if solver is None:
        solver = _solvers[system] = BlockSolver(system)
    return solver


def solve_frequency(system: AssembledSystem, omega: float, drive: Drive | None = None,
                    model: Model = Model.CAPACITIVE) -> Solution:
    """Solve at angular frequency ``omega`` (rad/s); default drive is 1 A."""
    return block_solver(system).solve(omega, drive or CurrentDrive(), model)


@dataclass
class SweepResult:
    frequencies: np.ndarray
    model: Model
    solutions: list = field(repr=False)
    failures: dict = field(default_factory=dict)

    @property
    def impedance(self) -> np.ndarray:
        """Complex impedance per frequency (NaN where the solve failed)."""
        return np.array([s.impedance if s is not None else complex(np.nan, np.nan)
                         for s in self.solutions])

    @property
    def ok(self) -> bool:
        return not self.failures


def sweep(system: AssembledSystem, frequencies: Sequence[float], drive: Drive | None = None,
          model: Model = Model.CAPACITIVE, workers: int = 1) -> SweepResult:
    """Independent solves at every frequency (Hz). Failed points are recorded, not raised."""
    freqs = np.asarray(frequencies, dtype=float)
    if freqs.size == 0:
        raise ConfigError("frequency list is empty", "sweep")
    if np.any(freqs < 0) or np.any(np.diff(freqs) < 0):
        raise ConfigError("frequencies must be non-negative and sorted", "sweep")
    drive = drive or CurrentDrive()
    solver = block_solver(system)
    _warn_skin_depth(system, freqs.max())

    def one(f):
        try:
            return solver.solve(2.0 * math.pi * f, drive, model), None
        except SolverError as exc:
            return None, str(exc)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, freqs))
    else:
        results = [one(f) for f in freqs]
    failures = {i: msg for i, (_, msg) in enumerate(results) if msg is not None}
    for i, msg in failures.items():
        log.warning("solve failed at f=%g Hz: %s", freqs[i], msg)
    return SweepResult(freqs, model, [s for s, _ in results], failures)


def _warn_skin_depth(system: AssembledSystem, f_max: float) -> None:
    if f_max <= 0:
        return
    w = system.winding
    sigma_c = system.tensors.sigma_par / w.fill_factor
    delta = skin_depth(f_max, MU0, sigma_c)
    if w.d_c > delta:
        log.warning("conductor thickness %.3g m exceeds skin depth %.3g m at %.3g Hz; "
                    "uniform-current assumption is violated", w.d_c, delta, f_max)
