"""Rectangle layouts of the bundled example geometries.

All lengths are in meters.  Each layout knows its symmetry, its boundary
conditions and the placement of the foil winding, so that a mesh at any
resolution can be produced with :meth:`Layout.mesh`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import GeometryError
from .mesh import Mesh, Rect, Region, Symmetry, generate_rect_layout
from .winding import FoilWindingSpec


@dataclass(frozen=True)
class Layout:
    rects: tuple[Rect, ...]
    symmetry: Symmetry
    winding: FoilWindingSpec
    walls: frozenset = frozenset({"left", "right", "bottom", "top"})
    axis: bool = False

    def mesh(self, target_h: float, winding_h: float | None = None) -> Mesh:
        """Structured mesh; ``winding_h`` refines the grid lines crossing the winding."""
        rects = self.rects
        if winding_h is not None:
            rects = tuple(replace(r, max_h=winding_h) if r.region == Region.FOIL_WINDING else r
                          for r in rects)
        return generate_rect_layout(rects, target_h, walls=self.walls, axis=self.axis)

    @property
    def smallest_feature(self) -> float:
        return min(min(r.width, r.height) for r in self.rects)


def _grid_rects(xs: Sequence[float], ys: Sequence[float], classify) -> list[Rect]:
    """Cells of a coarse grid; ``classify(xc, yc, cell)`` returns a Rect or None."""
    rects = []
    for x0, x1 in zip(xs[:-1], xs[1:]):
        for y0, y1 in zip(ys[:-1], ys[1:]):
            r = classify(0.5 * (x0 + x1), 0.5 * (y0 + y1), (x0, x1, y0, y1))
            if r is not None:
                rects.append(r)
    return rects


def cartesian_box(
    turns: int = 500,
    fill_factor: float = 0.95,
    thickness: float = 0.01,
    height: float = 0.02,
    box: tuple[float, float] = (0.03, 0.04),
    length_z: float = 0.3,
) -> Layout:
    """Straight foil winding centered in an air box bounded by flux walls."""
    bw, bh = box
    if thickness >= bw or height >= bh:
        raise GeometryError("winding does not fit into the box")
    xs = [-bw / 2, -thickness / 2, thickness / 2, bw / 2]
    ys = [-bh / 2, -height / 2, height / 2, bh / 2]

    def classify(xc, yc, c):
        inside = abs(xc) < thickness / 2 and abs(yc) < height / 2
        return Rect(*c, Region.FOIL_WINDING if inside else Region.AIR)

    spec = FoilWindingSpec(turns, thickness, height, fill_factor, (0.0, 0.0), 0)
    return Layout(tuple(_grid_rects(xs, ys, classify)), Symmetry.cartesian(length_z), spec)


@dataclass(frozen=True)
class PotGeometry:
    """Pot core dimensions (m).  The window is centered at z = 0."""

    outer_radius: float = 0.040
    half_height: float = 0.040
    wall: float = 0.010
    limb_radius: float = 0.010
    air_gap: float = 0.004
    winding_r: tuple[float, float] = (0.013, 0.027)
    winding_half_height: float = 0.025
    chamfer: float = 0.002
    margin: float = 0.010


def pot_inductor(turns: int = 500, fill_factor: float = 0.95,
                 geometry: PotGeometry = PotGeometry()) -> Layout:
    """Axisymmetric pot core with a gapped center limb and a tube foil winding."""
    g = geometry
    r_in, r_out = g.limb_radius, g.outer_radius - g.wall
    z_top = g.half_height - g.wall
    w0, w1 = g.winding_r
    wz = g.winding_half_height
    c = g.chamfer
    gap = g.air_gap / 2
    if not (0 < r_in < w0 < w1 < r_out and wz < z_top - 0 and gap < z_top):
        raise GeometryError("inconsistent pot core dimensions")
    rs = [0.0, r_in, r_in + c, w0, w1, r_out - c, r_out, g.outer_radius,
          g.outer_radius + g.margin]
    H = g.half_height + g.margin
    zs = [-H, -g.half_height, -z_top, -z_top + c, -wz, -gap, gap, wz, z_top - c, z_top,
          g.half_height, H]
    rs = sorted(set(rs))
    zs = sorted(set(zs))

    def classify(rc, zc, cell):
        in_core = rc < g.outer_radius and abs(zc) < g.half_height
        if not in_core:
            return Rect(*cell, Region.AIR)
        in_window = r_in < rc < r_out and abs(zc) < z_top
        if not in_window:
            limb_gap = rc < r_in and abs(zc) < gap
            return Rect(*cell, Region.AIR if limb_gap else Region.YOKE)
        if w0 < rc < w1 and abs(zc) < wz:
            return Rect(*cell, Region.FOIL_WINDING)
        near_r = rc < r_in + c or rc > r_out - c
        near_z = abs(zc) > z_top - c
        if near_r and near_z:
            corner = ("l" if zc < 0 else "u") + ("l" if rc < r_in + c else "r")
            return Rect(*cell, Region.AIR, cut_corner=corner, cut_region=Region.YOKE)
        return Rect(*cell, Region.AIR)

    spec = FoilWindingSpec(turns, w1 - w0, 2 * wz, fill_factor, (0.5 * (w0 + w1), 0.0), 0)
    return Layout(tuple(_grid_rects(rs, zs, classify)), Symmetry.axisymmetric(), spec, axis=True)


def window_stack(turns: int = 10, fill_factor: float = 0.95, thickness: float = 0.01,
                 height: float = 0.02, gap: float = 0.01, length_z: float = 0.3) -> Layout:
    """Winding filling the full height of a slot, flux wall behind the air gap only.

    The open sides carry natural conditions, so the field inside the winding
    varies only across the turns.  This is the geometry of the resolved-turn
    ladder comparison.
    """
    rects = (
        Rect(0.0, gap, 0.0, height, Region.AIR),
        Rect(gap, gap + thickness, 0.0, height, Region.FOIL_WINDING),
    )
    spec = FoilWindingSpec(turns, thickness, height, fill_factor,
                           (gap + thickness / 2, height / 2), 0)
    return Layout(rects, Symmetry.cartesian(length_z), spec, walls=frozenset({"left"}))


def resolve_turns(layout: Layout) -> Layout:
    """Split the winding rectangle into one rectangle per turn (group ids 1..N).

    The turns remain tagged as foil winding, so the same mesh serves both the
    homogenized model and the resolved-turn oracle.
    """
    spec = layout.winding
    x0, x1, y0, y1 = spec.rect
    out = []
    found = False
    for r in layout.rects:
        if r.region != Region.FOIL_WINDING:
            out.append(r)
            continue
        if not np.allclose([r.x0, r.x1, r.y0, r.y1], [x0, x1, y0, y1]):
            raise GeometryError("resolve_turns needs the winding as a single rectangle")
        found = True
        edges = np.linspace(0.0, 1.0, spec.turns + 1)
        for k in range(spec.turns):
            if spec.alpha_axis == 0:
                lo, hi = x0 + edges[k] * (x1 - x0), x0 + edges[k + 1] * (x1 - x0)
                out.append(Rect(lo, hi, y0, y1, Region.FOIL_WINDING, group=k + 1))
            else:
                lo, hi = y0 + edges[k] * (y1 - y0), y0 + edges[k + 1] * (y1 - y0)
                out.append(Rect(x0, x1, lo, hi, Region.FOIL_WINDING, group=k + 1))
    if not found:
        raise GeometryError("layout has no foil winding rectangle")
    return replace(layout, rects=tuple(out))
