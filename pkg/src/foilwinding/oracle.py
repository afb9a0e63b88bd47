"""Independent reference models used to check the homogenized winding.

* closed-form DC resistance and parallel-plate gap capacitance,
* per-turn inductance matrix from magnetostatic solves on a mesh with every
  turn resolved,
* a lumped ladder network built from those values and solved by nodal analysis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .assembly import Material, assemble_field, assemble_source
from .errors import DomainError, GeometryError, SolverError
from .mesh import Mesh, Region, Symmetry
from .winding import FoilWindingSpec


def turn_radii(spec: FoilWindingSpec) -> np.ndarray:
    """Mesh x-coordinate of every turn's mid-plane (alpha running along x)."""
    if spec.alpha_axis != 0:
        return np.full(spec.turns, spec.center[0])
    return spec.center[0] + spec.turn_centers()


def _loop_lengths(spec: FoilWindingSpec, symmetry: Symmetry, positions) -> np.ndarray:
    return symmetry.path_length(np.asarray(positions, dtype=float))


def dc_resistance(spec: FoilWindingSpec, symmetry: Symmetry, sigma_c: float) -> float:
    """Series resistance of all turns (Ohm)."""
    return float(np.sum(turn_resistances(spec, symmetry, sigma_c)))


def turn_resistances(spec: FoilWindingSpec, symmetry: Symmetry, sigma_c: float) -> np.ndarray:
    loop = _loop_lengths(spec, symmetry, turn_radii(spec))
    return loop / (sigma_c * spec.d_c * spec.height)


def interturn_capacitance(spec: FoilWindingSpec, symmetry: Symmetry, eps_i: float) -> np.ndarray:
    """Parallel-plate capacitance of each of the ``N - 1`` insulation gaps (F)."""
    a0 = spec.alpha_interval[0]
    gaps = a0 + spec.d_f * np.arange(1, spec.turns)
    if spec.alpha_axis == 0:
        pos = spec.center[0] + gaps
    else:
        pos = np.full(spec.turns - 1, spec.center[0])
    return eps_i * spec.height * _loop_lengths(spec, symmetry, pos) / spec.d_i


def turn_groups(mesh: Mesh) -> np.ndarray:
    """Sorted positive group ids present in the winding region."""
    winding = mesh.region_mask(Region.FOIL_WINDING)
    groups = np.unique(mesh.groups[winding])
    if len(groups) == 0 or groups[0] <= 0:
        raise GeometryError("winding region is not split into turns (positive group ids)")
    return groups


def magnetostatic_inductances(mesh: Mesh, symmetry: Symmetry,
                              materials: Mapping[Region, Material]) -> np.ndarray:
    """Inductance matrix of the resolved turns (H).

    Each turn carries a unit current spread uniformly over its cross-section;
    entry ``[k, m]`` is the mean flux linkage of turn ``m`` due to turn ``k``.
    The linkage functional equals the source vector, so ``L = J^T K^-1 J``.
    """
    groups = turn_groups(mesh)
    if not np.array_equal(groups, np.arange(1, len(groups) + 1)):
        raise GeometryError("turn group ids must be 1..N without gaps")
    winding = mesh.region_mask(Region.FOIL_WINDING)
    if np.any(winding & (mesh.groups <= 0)):
        raise GeometryError("winding triangles outside every turn")
    mats = dict(materials)
    K, _ = assemble_field(mesh, mats, symmetry)
    areas = mesh.areas
    J = np.empty((mesh.n_nodes, len(groups)))
    for k, g in enumerate(groups):
        in_turn = winding & (mesh.groups == g)
        density = np.where(in_turn, 1.0 / areas[in_turn].sum(), 0.0)
        J[:, k] = assemble_source(mesh, density, symmetry)
    free = np.setdiff1d(np.arange(mesh.n_nodes), mesh.dirichlet_nodes())
    Kf = K.tocsr()[free][:, free].tocsc()
    try:
        A = spla.splu(Kf).solve(J[free])
    except RuntimeError as exc:
        raise SolverError(f"magnetostatic stiffness is singular: {exc}") from exc
    return J[free].T @ A


@dataclass(frozen=True)
class LadderNetwork:
    """Chain of ``N`` coupled turns between nodes ``k-1`` and ``k``.

    ``C[k]`` is the insulation gap between turns ``k`` and ``k+1``; along the
    turns its voltage varies linearly from ``V[k]-V[k+1]`` to ``V[k+1]-V[k+2]``
    and it is lumped onto these three nodes with its exact stored energy.
    """

    R: np.ndarray
    C: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        C = np.asarray(self.C, dtype=float)
        L = np.asarray(self.L, dtype=float)
        n = len(R)
        if n < 1 or C.shape != (max(n - 1, 0),) or L.shape != (n, n):
            raise DomainError("ladder needs N resistances, N-1 capacitances and an N x N inductance")
        if np.any(R <= 0) or np.any(C <= 0):
            raise DomainError("ladder resistances and capacitances must be positive")
        if not np.allclose(L, L.T, rtol=1e-8, atol=0.0):
            raise DomainError("inductance matrix is not symmetric")
        if np.linalg.eigvalsh(0.5 * (L + L.T)).min() < -1e-10 * np.abs(L).max():
            raise DomainError("inductance matrix is not positive semidefinite")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "L", 0.5 * (L + L.T))

    @property
    def turns(self) -> int:
        return len(self.R)

    def capacitance_matrix(self) -> np.ndarray:
        """Nodal capacitance matrix (N+1 x N+1) of all gaps."""
        n = self.turns
        Cn = np.zeros((n + 1, n + 1))
        # d1 = v0 - v1, d2 = v1 - v2: energy C/2 * (d1^2 + d1 d2 + d2^2) / 3
        D = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
        Q = np.array([[1.0, 0.5], [0.5, 1.0]]) / 3.0
        local = D.T @ Q @ D
        for k, c in enumerate(self.C):
            idx = np.array([k, k + 1, k + 2])
            Cn[np.ix_(idx, idx)] += c * local
        return Cn


def ladder_impedance(network: LadderNetwork, omega: float) -> complex:
    """Impedance between node 0 and the grounded node N."""
    n = network.turns
    Zb = np.diag(network.R).astype(complex) + 1j * omega * network.L
    try:
        Yb = scipy.linalg.inv(Zb)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError(f"branch impedance matrix is singular: {exc}") from exc
    A = np.zeros((n + 1, n))
    A[np.arange(n), np.arange(n)] = 1.0
    A[np.arange(1, n + 1), np.arange(n)] = -1.0
    Y = A @ Yb @ A.T + 1j * omega * network.capacitance_matrix()
    Y = Y[:n, :n]
    rhs = np.zeros(n, dtype=complex)
    rhs[0] = 1.0
    try:
        V = scipy.linalg.solve(Y, rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError(f"nodal admittance matrix is singular: {exc}") from exc
    if not np.all(np.isfinite(V)):
        raise SolverError("nodal admittance matrix is singular")
    return complex(V[0])


def build_ladder(mesh: Mesh, spec: FoilWindingSpec, symmetry: Symmetry, sigma_c: float,
                 eps_i: float, materials: Mapping[Region, Material]) -> LadderNetwork:
    """Ladder of the resolved-turn mesh: analytic R and C, FE inductances."""
    L = magnetostatic_inductances(mesh, symmetry, materials)
    if L.shape[0] != spec.turns:
        raise GeometryError(f"mesh resolves {L.shape[0]} turns, winding has {spec.turns}")
    return LadderNetwork(turn_resistances(spec, symmetry, sigma_c),
                         interturn_capacitance(spec, symmetry, eps_i), L)
