"""Foil winding geometry, local frame, winding function and slice quadrature.

Only straight (Cartesian) and tube/disc (axisymmetric) windings are handled,
so the map from the reference box to the winding is affine: ``alpha`` is the
mesh coordinate along ``alpha_axis`` shifted by the winding center, ``gamma``
the other in-plane coordinate and ``beta`` points out of the plane.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bspline import BSplineBasis
from .errors import ConfigError, DomainError, GeometryError
from .mesh import Mesh, Region, Symmetry


@dataclass(frozen=True)
class LocalFrame:
    e_alpha: tuple[float, float]
    e_gamma: tuple[float, float]
    e_beta: str
    alpha_interval: tuple[float, float]


@dataclass(frozen=True)
class FoilWindingSpec:
    """Foil winding of ``turns`` foils filling a ``thickness`` x ``height`` rectangle.

    ``center`` is the rectangle center in mesh coordinates; ``alpha_axis``
    (0 or 1) is the mesh axis running across the turns.
    """

    turns: int
    thickness: float
    height: float
    fill_factor: float
    center: tuple[float, float] = (0.0, 0.0)
    alpha_axis: int = 0

    def __post_init__(self):
        if int(self.turns) != self.turns or self.turns < 2:
            raise GeometryError("a foil winding needs an integer number of turns > 1")
        if not (self.thickness > 0 and self.height > 0):
            raise GeometryError("winding thickness and height must be positive")
        if not 0.0 < self.fill_factor < 1.0:
            raise GeometryError("fill factor must lie in (0, 1)")
        if self.alpha_axis not in (0, 1):
            raise GeometryError("alpha_axis must be 0 or 1")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if self.d_f > self.height / 10.0:
            warnings.warn(
                f"foil thickness {self.d_f:g} m is not small against the winding height "
                f"{self.height:g} m", stacklevel=2)

    @property
    def d_f(self) -> float:
        return self.thickness / self.turns

    @property
    def d_c(self) -> float:
        return self.fill_factor * self.d_f

    @property
    def d_i(self) -> float:
        return (1.0 - self.fill_factor) * self.d_f

    @property
    def gamma_axis(self) -> int:
        return 1 - self.alpha_axis

    @property
    def alpha_interval(self) -> tuple[float, float]:
        return (-0.5 * self.thickness, 0.5 * self.thickness)

    @property
    def rect(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the winding in mesh coordinates."""
        half = [0.0, 0.0]
        half[self.alpha_axis] = 0.5 * self.thickness
        half[self.gamma_axis] = 0.5 * self.height
        cx, cy = self.center
        return (cx - half[0], cx + half[0], cy - half[1], cy + half[1])

    @property
    def frame(self) -> LocalFrame:
        ea = (1.0, 0.0) if self.alpha_axis == 0 else (0.0, 1.0)
        eg = (0.0, 1.0) if self.alpha_axis == 0 else (1.0, 0.0)
        return LocalFrame(ea, eg, "out-of-plane", self.alpha_interval)

    def turn_centers(self) -> np.ndarray:
        """Alpha coordinates of the foil mid-planes."""
        a0 = self.alpha_interval[0]
        return a0 + (np.arange(self.turns) + 0.5) * self.d_f

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x0, x1, y0, y1 = self.rect
        return (p[:, 0] >= x0 - tol) & (p[:, 0] <= x1 + tol) & \
            (p[:, 1] >= y0 - tol) & (p[:, 1] <= y1 + tol)

    def to_local(self, points) -> tuple[np.ndarray, np.ndarray]:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        alpha = p[:, self.alpha_axis] - self.center[self.alpha_axis]
        return alpha, p[:, self.gamma_axis]

    def to_mesh(self, alpha, gamma) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        out = np.empty(alpha.shape + (2,))
        out[..., self.alpha_axis] = alpha + self.center[self.alpha_axis]
        out[..., self.gamma_axis] = gamma
        return out

    def local_alpha(self, points):
        """Alpha coordinate of points inside the winding (scalar in, scalar out)."""
        scalar = np.ndim(points) == 1
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.contains(p)
        if not inside.all():
            raise DomainError(f"point {p[~inside][0]} lies outside the foil winding")
        alpha = np.clip(self.to_local(p)[0], *self.alpha_interval)
        return float(alpha[0]) if scalar else alpha


def winding_function(spec: FoilWindingSpec, symmetry: Symmetry, points):
    """Out-of-plane component of the solid-conductor winding function (1/m).

    ``1 / l_z`` (Cartesian) or ``1 / (2 pi r)`` (axisymmetric) inside the
    winding, zero elsewhere.  The in-plane components vanish identically.
    """
    scalar = np.ndim(points) == 1
    p = np.atleast_2d(np.asarray(points, dtype=float))
    inside = spec.contains(p)
    if symmetry.is_axisymmetric and np.any(p[inside, 0] <= 0.0):
        raise GeometryError("winding touches or crosses the symmetry axis")
    chi = np.zeros(len(p))
    chi[inside] = 1.0 / symmetry.path_length(p[inside, 0])
    return float(chi[0]) if scalar else chi


def voltage_basis_field(spec: FoilWindingSpec, basis: BSplineBasis, j: int, points):
    """Spline ``j`` pulled back to mesh coordinates, zero outside the winding."""
    scalar = np.ndim(points) == 1
    p = np.atleast_2d(np.asarray(points, dtype=float))
    inside = spec.contains(p)
    out = np.zeros(len(p))
    if inside.any():
        alpha = np.clip(spec.to_local(p[inside])[0], *spec.alpha_interval)
        out[inside] = basis.eval(j, alpha)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# slices and quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SlicePoints:
    """Gauss points on the lines ``alpha = const`` through the winding triangles.

    ``weight`` is the line measure along gamma; summing ``weight * f`` over
    the points of one slice integrates ``f`` along gamma at that alpha.
    """

    alpha: np.ndarray          # (s,) slice positions
    slice_index: np.ndarray    # (p,)
    triangle: np.ndarray       # (p,) mesh triangle index
    gamma: np.ndarray          # (p,)
    coords: np.ndarray         # (p, 2) mesh coordinates
    weight: np.ndarray         # (p,)
    bary: np.ndarray           # (p, 3) shape function values

    def slice_sum(self, values) -> np.ndarray:
        """Per-slice sums of ``values`` (complex allowed)."""
        values = np.asarray(values)
        out = np.zeros(len(self.alpha), dtype=np.result_type(values, float))
        np.add.at(out, self.slice_index, values)
        return out


@dataclass(frozen=True, eq=False)
class WindingQuadrature:
    """Tensor Gauss rule over the winding: alpha nodes on sub-segments between
    all vertex alphas and spline knots, gamma nodes along each slice segment."""

    alpha_weight: np.ndarray   # (s,)
    points: SlicePoints

    @property
    def alpha(self) -> np.ndarray:
        return self.points.alpha

    @property
    def weight(self) -> np.ndarray:
        return self.alpha_weight[self.points.slice_index] * self.points.weight


def _winding_triangles(mesh: Mesh) -> np.ndarray:
    tri = np.nonzero(mesh.region_mask(Region.FOIL_WINDING))[0]
    if len(tri) == 0:
        raise GeometryError("mesh has no foil winding triangles")
    return tri


def slice_points(mesh: Mesh, spec: FoilWindingSpec, alpha, order: int = 4,
                 chunk: int = 2_000_000) -> SlicePoints:
    """Gauss-Legendre points (``order`` per triangle crossing) on slices at ``alpha``.

    A slice running exactly along a mesh edge is attributed to the triangles
    on its right (larger alpha), or on its left at the upper end of the winding.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    a_lo, a_hi = spec.alpha_interval
    tol = 1e-12 * spec.thickness
    if np.any(alpha < a_lo - tol) or np.any(alpha > a_hi + tol):
        raise DomainError("slice position outside the winding")
    tris = _winding_triangles(mesh)
    va, vg = spec.to_local(mesh.nodes[mesh.triangles[tris]].reshape(-1, 2))
    va = va.reshape(-1, 3)
    vg = vg.reshape(-1, 3)
    tmin, tmax = va.min(axis=1), va.max(axis=1)
    xg, wg = np.polynomial.legendre.leggauss(order)

    pieces = []
    step = max(1, chunk // max(1, len(tris)))
    for s0 in range(0, len(alpha), step):
        a = alpha[s0:s0 + step, None]
        at_top = np.abs(a - a_hi) <= tol
        hit = np.where(at_top, (tmin < a) & (a <= tmax), (tmin <= a) & (a < tmax))
        si, ti = np.nonzero(hit)
        if len(si) == 0:
            continue
        av = alpha[s0 + si]
        lo = np.full(len(si), np.inf)
        hi = np.full(len(si), -np.inf)
        for e0, e1 in ((0, 1), (1, 2), (2, 0)):
            p_a, q_a = va[ti, e0], va[ti, e1]
            p_g, q_g = vg[ti, e0], vg[ti, e1]
            da = q_a - p_a
            vertical = da == 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (av - p_a) / da
            ok = ~vertical & (t >= 0.0) & (t <= 1.0)
            g = p_g + t * (q_g - p_g)
            lo = np.where(ok, np.minimum(lo, g), lo)
            hi = np.where(ok, np.maximum(hi, g), hi)
            on_edge = vertical & (p_a == av)
            lo = np.where(on_edge, np.minimum(lo, np.minimum(p_g, q_g)), lo)
            hi = np.where(on_edge, np.maximum(hi, np.maximum(p_g, q_g)), hi)
        good = hi > lo
        si, ti, lo, hi, av = si[good], ti[good], lo[good], hi[good], av[good]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        gam = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
        wts = (half[:, None] * wg[None, :]).ravel()
        k = np.repeat(np.arange(len(si)), order)
        pieces.append((s0 + si[k], tris[ti[k]], gam, wts, av[k]))

    if pieces:
        sidx, tri, gam, wts, av = (np.concatenate(c) for c in zip(*pieces))
    else:
        sidx = tri = np.zeros(0, dtype=np.int64)
        gam = wts = av = np.zeros(0)
    coords = spec.to_mesh(av, gam)
    bary = mesh.barycentric(tri, coords) if len(tri) else np.zeros((0, 3))
    return SlicePoints(alpha, sidx.astype(np.int64), tri.astype(np.int64), gam, coords, wts, bary)


def winding_quadrature(mesh: Mesh, spec: FoilWindingSpec, basis: BSplineBasis,
                       order: int = 4) -> WindingQuadrature:
    """Quadrature exact for piecewise polynomials in alpha whose breaks lie at
    mesh vertices or spline knots (degree ``2*order - 1`` per direction)."""
    if not np.allclose(basis.interval, spec.alpha_interval, rtol=0.0, atol=1e-12 * spec.thickness):
        raise ConfigError(
            f"spline interval {basis.interval} does not match the winding extent {spec.alpha_interval}")
    tris = _winding_triangles(mesh)
    va, _ = spec.to_local(mesh.nodes[mesh.triangles[tris]].reshape(-1, 2))
    a_lo, a_hi = spec.alpha_interval
    tol = 1e-9 * spec.thickness
    cuts = np.concatenate([va, basis.breakpoints, [a_lo, a_hi]])
    cuts = np.sort(cuts[(cuts >= a_lo - tol) & (cuts <= a_hi + tol)])
    keep = np.concatenate([[True], np.diff(cuts) > tol])
    cuts = np.clip(cuts[keep], a_lo, a_hi)
    cuts[0], cuts[-1] = a_lo, a_hi
    xa, wa = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(cuts)
    mid = 0.5 * (cuts[1:] + cuts[:-1])
    alpha = (mid[:, None] + half[:, None] * xa[None, :]).ravel()
    alpha_w = (half[:, None] * wa[None, :]).ravel()
    return WindingQuadrature(alpha_w, slice_points(mesh, spec, alpha, order))
