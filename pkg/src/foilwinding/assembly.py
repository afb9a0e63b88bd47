"""Sparse matrices of the coupled field / voltage-function system.

The 3D edge-element formulation is reduced to linear nodal elements: the
nodal unknown is ``A_z`` (Cartesian) or ``psi = r A_phi`` (axisymmetric).
With ``L(x)`` the out-of-plane loop length (``l_z`` or ``2 pi r``) and
``rho`` the radial weight (1 or ``r``), the physical out-of-plane vector
potential of shape function ``N_i`` is ``N_i / rho`` and ``dV = L dA``.
Every block below is written with these two factors only.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.io
import scipy.sparse as sp

from .bspline import BSplineBasis
from .errors import ConfigError
from .homogenization import HomogenizedTensors
from .mesh import Mesh, Region, Symmetry
from .winding import FoilWindingSpec, WindingQuadrature, winding_quadrature


@dataclass(frozen=True)
class Material:
    """Isotropic region material: reluctivity (m/H) and conductivity (S/m)."""

    nu: float
    sigma: float = 0.0


def triangle_rule(n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-square Gauss rule on the reference triangle.

    Returns barycentric points (q, 3) and weights (q,) summing to one.
    All points are strictly interior; exact up to polynomial degree ``2n - 2``.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    s = u.ravel()
    t = (v * (1.0 - u)).ravel()
    weight = (wu * wv * (1.0 - u)).ravel() * 2.0
    return np.column_stack([1.0 - s - t, s, t]), weight


def _element_points(mesh: Mesh, order: int):
    bary, w = triangle_rule(order)
    pts = np.einsum("qk,mkd->mqd", bary, mesh.nodes[mesh.triangles])
    return bary, w, pts


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()


def _region_table(mesh: Mesh, materials: Mapping[Region, Material], tensors):
    present = {Region(int(r)) for r in np.unique(mesh.regions)}
    nu_a = np.empty(mesh.n_triangles)
    nu_g = np.empty(mesh.n_triangles)
    sigma = np.empty(mesh.n_triangles)
    for region in present:
        mask = mesh.regions == int(region)
        if region == Region.FOIL_WINDING and (tensors is not None or region not in materials):
            if tensors is None:
                raise ConfigError("foil winding present but no homogenized tensors given",
                                  "materials")
            nu_a[mask], nu_g[mask], sigma[mask] = tensors.nu_par, tensors.nu_perp, tensors.sigma_par
        else:
            if region not in materials:
                raise ConfigError(f"no material given for region {region.name.lower()}", "materials")
            m = materials[region]
            nu_a[mask], nu_g[mask], sigma[mask] = m.nu, m.nu, m.sigma
    return nu_a, nu_g, sigma


def assemble_field(
    mesh: Mesh,
    materials: Mapping[Region, Material],
    symmetry: Symmetry,
    tensors: HomogenizedTensors | None = None,
    winding: FoilWindingSpec | None = None,
    order: int = 3,
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Curl-curl stiffness ``K`` and conductivity mass ``M``.

    In the winding the reluctivity is anisotropic: the field component along
    alpha comes from the gamma-derivative of the potential and vice versa, so
    ``nu_par`` weights the alpha-derivative and ``nu_perp`` the gamma-derivative.
    Outside the winding the conductivity of the region material is used,
    inside it ``sigma_par`` (the current flows along beta).
    """
    nu_a, nu_g, sigma = _region_table(mesh, materials, tensors)
    alpha_axis = 0 if winding is None else winding.alpha_axis
    nu_xy = np.empty((mesh.n_triangles, 2))
    nu_xy[:, alpha_axis] = nu_a
    nu_xy[:, 1 - alpha_axis] = nu_g

    bary, w, pts = _element_points(mesh, order)
    loop = symmetry.path_length(pts[..., 0])
    rho = symmetry.radial_weight(pts[..., 0])
    area = mesh.areas

    stiff_weight = area * np.einsum("q,mq->m", w, loop / rho**2)
    g = mesh.gradients
    k_local = np.einsum("mid,md,mjd->mij", g, nu_xy, g) * stiff_weight[:, None, None]
    K = _scatter(mesh, k_local)

    cond = sigma != 0.0
    m_local = np.zeros((mesh.n_triangles, 3, 3))
    if cond.any():
        c = w[None, :] * (loop / rho**2)[cond] * (area * sigma)[cond, None]
        m_local[cond] = np.einsum("mq,qi,qj->mij", c, bary, bary)
    M = _scatter(mesh, m_local)
    return K, M


def assemble_coupling(
    mesh: Mesh,
    winding: FoilWindingSpec,
    basis: BSplineBasis,
    symmetry: Symmetry,
    sigma_par: float,
    quadrature: WindingQuadrature | None = None,
) -> sp.csr_matrix:
    """Field / voltage-function coupling ``X`` (n_nodes x n_splines).

    ``X[i, j]`` integrates ``sigma_par * xi_j * N_i / rho``; the winding
    function ``1/L`` cancels against the volume measure.
    """
    q = quadrature or winding_quadrature(mesh, winding, basis)
    pts = q.points
    xi = basis.values(q.alpha)[pts.slice_index]
    c = q.weight * sigma_par / symmetry.radial_weight(pts.coords[:, 0])
    vals = c[:, None, None] * pts.bary[:, :, None] * xi[:, None, :]
    rows = np.repeat(mesh.triangles[pts.triangle], basis.n, axis=1).ravel()
    cols = np.tile(np.arange(basis.n), (len(pts.triangle), 3)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(mesh.n_nodes, basis.n)).tocsr()


def assemble_winding(
    mesh: Mesh,
    winding: FoilWindingSpec,
    basis: BSplineBasis,
    symmetry: Symmetry,
    sigma_par: float,
    eps_hom: float,
    quadrature: WindingQuadrature | None = None,
):
    """Winding blocks ``G``, ``C_grad``, ``C_volt`` and turn weighting ``P``.

    ``G`` is the conductance of the voltage-function modes, ``C_grad`` the
    (non-symmetric) capacitance from the half-turn potential gradient term,
    ``C_volt`` the capacitance from the per-turn voltage term.  ``P`` maps the
    spline coefficients to the terminal voltage.
    """
    if eps_hom < 0:
        raise ConfigError("homogenized permittivity must be non-negative", "materials")
    q = quadrature or winding_quadrature(mesh, winding, basis)
    pts = q.points
    xi = basis.values(q.alpha)[pts.slice_index]
    dxi = basis.derivatives(q.alpha)[pts.slice_index]
    loop = symmetry.path_length(pts.coords[:, 0])
    w = q.weight
    d_f = winding.d_f

    G = (xi * (w * sigma_par / loop)[:, None]).T @ xi
    C_grad = (xi * (w * loop * eps_hom / (2.0 * d_f))[:, None]).T @ dxi
    C_volt = (xi * (w * loop * eps_hom / d_f**2)[:, None]).T @ xi
    P = basis.integrals / d_f
    return sp.csr_matrix(G), sp.csr_matrix(C_grad), sp.csr_matrix(C_volt), P


def assemble_source(mesh: Mesh, current_density, symmetry: Symmetry, order: int = 3) -> np.ndarray:
    """Load vector of an out-of-plane source current density (A/m^2).

    ``current_density`` is a mapping ``Region -> J`` or a per-triangle array.
    """
    if isinstance(current_density, Mapping):
        j_tri = np.zeros(mesh.n_triangles)
        for region, value in current_density.items():
            j_tri[mesh.regions == int(region)] += value
    else:
        j_tri = np.asarray(current_density, dtype=float)
        if j_tri.shape != (mesh.n_triangles,):
            raise ConfigError("per-triangle current density has the wrong length")
    out = np.zeros(mesh.n_nodes)
    if not j_tri.any():
        return out
    bary, w, pts = _element_points(mesh, order)
    c = w[None, :] * symmetry.path_length(pts[..., 0]) / symmetry.radial_weight(pts[..., 0])
    local = np.einsum("mq,qi->mi", c, bary) * (mesh.areas * j_tri)[:, None]
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """All blocks of the coupled system plus the context needed to post-process.

    Field blocks are full size (all nodes); ``dirichlet`` lists the nodes that
    the solver eliminates.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    X: sp.csr_matrix
    G: sp.csr_matrix
    C_grad: sp.csr_matrix
    C_volt: sp.csr_matrix
    P: np.ndarray
    js: np.ndarray
    dirichlet: np.ndarray
    symmetry: Symmetry
    mesh: Mesh
    winding: FoilWindingSpec
    basis: BSplineBasis
    tensors: HomogenizedTensors
    quadrature: WindingQuadrature

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.mesh.n_nodes, dtype=bool)
        mask[self.dirichlet] = False
        return np.nonzero(mask)[0]

    @property
    def n_field(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_splines(self) -> int:
        return self.basis.n

    def without_capacitance(self) -> "AssembledSystem":
        """Same system with both capacitance blocks and the permittivity zeroed."""
        zero = sp.csr_matrix(self.G.shape)
        return _replace(self, C_grad=zero, C_volt=zero.copy(),
                        tensors=_replace(self.tensors, eps_hom=0.0))


def _replace(system, **changes):
    from dataclasses import replace
    return replace(system, **changes)


def assemble_system(
    mesh: Mesh,
    symmetry: Symmetry,
    winding: FoilWindingSpec,
    basis: BSplineBasis,
    tensors: HomogenizedTensors,
    materials: Mapping[Region, Material],
    current_density=None,
    *,
    quad_order: int = 4,
    element_order: int = 3,
    eps_hom: float | None = None,
) -> AssembledSystem:
    """Assemble every block on ``mesh``.

    ``eps_hom`` overrides ``tensors.eps_hom`` in the capacitance blocks; zero
    reproduces the resistive-inductive model exactly.
    """
    mesh.check(axisymmetric=symmetry.is_axisymmetric, winding_rect=winding.rect)
    quad = winding_quadrature(mesh, winding, basis, quad_order)
    K, M = assemble_field(mesh, materials, symmetry, tensors, winding, element_order)
    X = assemble_coupling(mesh, winding, basis, symmetry, tensors.sigma_par, quad)
    eps = tensors.eps_hom if eps_hom is None else eps_hom
    G, C_grad, C_volt, P = assemble_winding(mesh, winding, basis, symmetry, tensors.sigma_par, eps, quad)
    js = assemble_source(mesh, current_density or {}, symmetry, element_order)
    if eps != tensors.eps_hom:
        tensors = _replace(tensors, eps_hom=eps)
    return AssembledSystem(K, M, X, G, C_grad, C_volt, P, js, mesh.dirichlet_nodes(),
                           symmetry, mesh, winding, basis, tensors, quad)


def dump_matrix_market(system: AssembledSystem, directory) -> list[Path]:
    """Write every block in Matrix Market coordinate format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    blocks = {"K": system.K, "M": system.M, "X": system.X, "G": system.G,
              "C_grad": system.C_grad, "C_volt": system.C_volt}
    for name, mat in blocks.items():
        path = directory / f"{name}.mtx"
        scipy.io.mmwrite(str(path), sp.coo_matrix(mat), precision=17)
        written.append(path)
    for name, vec in {"P": system.P, "js": system.js}.items():
        path = directory / f"{name}.mtx"
        scipy.io.mmwrite(str(path), sp.coo_matrix(np.asarray(vec).reshape(-1, 1)), precision=17)
        written.append(path)
    return written
