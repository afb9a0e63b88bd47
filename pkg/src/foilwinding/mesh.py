"""Triangular meshes with region/boundary tags, a structured rectangle mesher
and an ASCII MSH 2.2 reader/writer.

Coordinates are in meters.  In axisymmetric mode the first coordinate is the
radius ``r`` and the second the axial position ``z``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GeometryError, MeshFormatError, ResolutionError, TaggingError


class Region(IntEnum):
    AIR = 0
    YOKE = 1
    FOIL_WINDING = 2


class BoundaryTag(IntEnum):
    """Tags for Dirichlet boundaries.  Untagged boundary edges are natural."""

    FLUX_WALL = 1
    AXIS = 2


@dataclass(frozen=True)
class Symmetry:
    """2D reduction of the 3D problem.

    ``kind`` is ``"cartesian"`` (needs ``length_z``) or ``"axisymmetric"``.
    """

    kind: str
    length_z: float | None = None

    def __post_init__(self):
        if self.kind not in ("cartesian", "axisymmetric"):
            raise ValueError(f"unknown symmetry kind {self.kind!r}")
        if self.kind == "cartesian":
            if self.length_z is None or not self.length_z > 0:
                raise ValueError("cartesian symmetry requires length_z > 0")

    @classmethod
    def cartesian(cls, length_z: float) -> "Symmetry":
        return cls("cartesian", float(length_z))

    @classmethod
    def axisymmetric(cls) -> "Symmetry":
        return cls("axisymmetric")

    @property
    def is_axisymmetric(self) -> bool:
        return self.kind == "axisymmetric"

    def path_length(self, x):
        """Length of one out-of-plane current loop through the point with first coordinate ``x``."""
        x = np.asarray(x, dtype=float)
        if self.is_axisymmetric:
            return 2.0 * np.pi * x
        return np.full_like(x, self.length_z)

    def radial_weight(self, x):
        """Factor relating the nodal unknown to the out-of-plane vector potential.

        1 for Cartesian (unknown is A_z), r for axisymmetric (unknown is r*A_phi).
        """
        x = np.asarray(x, dtype=float)
        if self.is_axisymmetric:
            return x.copy()
        return np.ones_like(x)


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable linear triangle mesh.

    Attributes
    ----------
    nodes : (n, 2) float array
    triangles : (m, 3) int array, counter-clockwise
    regions : (m,) int array of :class:`Region` codes
    groups : (m,) int array; sub-region id (layout rectangle group or MSH
        elementary tag), used to single out individual turns
    boundary_edges : (k, 2) int array of tagged boundary edges
    boundary_tags : (k,) int array of :class:`BoundaryTag` codes
    """

    nodes: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    groups: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        nodes = _readonly(self.nodes, float).reshape(-1, 2)
        tris = _readonly(self.triangles, np.int64).reshape(-1, 3)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "regions", _readonly(self.regions, np.int64))
        object.__setattr__(self, "groups", _readonly(self.groups, np.int64))
        object.__setattr__(self, "boundary_edges", _readonly(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", _readonly(self.boundary_tags, np.int64))
        if self.regions.shape != (len(tris),) or self.groups.shape != (len(tris),):
            raise GeometryError("regions/groups must have one entry per triangle")
        if self.boundary_tags.shape != (len(self.boundary_edges),):
            raise GeometryError("boundary_tags must have one entry per boundary edge")
        if len(tris) == 0:
            raise GeometryError("mesh has no triangles")
        if tris.min() < 0 or tris.max() >= len(nodes):
            raise GeometryError("triangle references a missing node")
        if np.any(self.signed_areas <= 0.0):
            raise GeometryError("triangles must have strictly positive signed area")
        used = np.zeros(len(nodes), dtype=bool)
        used[tris.ravel()] = True
        if not used.all():
            raise GeometryError(f"{int((~used).sum())} nodes do not belong to any triangle")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def gradients(self) -> np.ndarray:
        """(m, 3, 2) gradients of the three barycentric shape functions."""
        p = self.nodes[self.triangles]
        area2 = 2.0 * self.signed_areas
        g = np.empty((self.n_triangles, 3, 2))
        for k in range(3):
            a, b = p[:, (k + 1) % 3], p[:, (k + 2) % 3]
            g[:, k, 0] = (a[:, 1] - b[:, 1]) / area2
            g[:, k, 1] = (b[:, 0] - a[:, 0]) / area2
        return g

    def edge_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and how many triangles share each."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        edges, counts = np.unique(e, axis=0, return_counts=True)
        return edges, counts

    def outer_edges(self) -> np.ndarray:
        edges, counts = self.edge_counts()
        return edges[counts == 1]

    def dirichlet_nodes(self) -> np.ndarray:
        """Sorted node indices on FluxWall or Axis edges."""
        if len(self.boundary_edges) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.boundary_edges.ravel())

    def region_mask(self, region: Region) -> np.ndarray:
        return self.regions == int(region)

    def barycentric(self, tri: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of ``points[k]`` inside triangle ``tri[k]``."""
        tri = np.asarray(tri)
        points = np.asarray(points, dtype=float)
        p0 = self.nodes[self.triangles[tri, 0]]
        g = self.gradients[tri]
        d = points - p0
        l1 = np.einsum("kj,kj->k", g[:, 1], d)
        l2 = np.einsum("kj,kj->k", g[:, 2], d)
        return np.stack([1.0 - l1 - l2, l1, l2], axis=1)

    def check(self, *, axisymmetric: bool = False, winding_rect=None, tol: float = 1e-12) -> None:
        """Verify the geometric invariants that depend on the problem setup."""
        if axisymmetric and np.any(self.nodes[:, 0] < -tol):
            raise GeometryError("axisymmetric mesh has nodes with r < 0")
        if winding_rect is not None:
            x0, x1, y0, y1 = winding_rect
            p = self.nodes[self.triangles[self.region_mask(Region.FOIL_WINDING)]].reshape(-1, 2)
            if np.any(p[:, 0] < x0 - tol) or np.any(p[:, 0] > x1 + tol) or \
                    np.any(p[:, 1] < y0 - tol) or np.any(p[:, 1] > y1 + tol):
                raise GeometryError("foil winding triangles extend outside the winding rectangle")


# ---------------------------------------------------------------------------
# structured rectangle mesher
# ---------------------------------------------------------------------------

CORNERS = ("ll", "lr", "ul", "ur")
SIDES = frozenset({"left", "right", "bottom", "top"})


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]`` carrying a region tag.

    A square may be cut along one diagonal: the triangular half touching
    ``cut_corner`` (one of ``ll, lr, ul, ur``) is tagged ``cut_region``.
    """

    x0: float
    x1: float
    y0: float
    y1: float
    region: Region
    group: int = 0
    cut_corner: str | None = None
    cut_region: Region | None = None
    max_h: float | None = None

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise GeometryError(f"degenerate rectangle {self}")
        if self.cut_corner is not None:
            if self.cut_corner not in CORNERS:
                raise GeometryError(f"cut_corner must be one of {CORNERS}")
            if self.cut_region is None:
                raise GeometryError("cut_corner needs cut_region")
        if self.max_h is not None and not self.max_h > 0:
            raise GeometryError("max_h must be positive")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height


def _pow2_divisions(length: float, h: float) -> int:
    # power-of-two counts make halving h exactly double every division
    x = length / h * (1.0 - 1e-12)
    if x <= 1.0:
        return 1
    return 2 ** math.ceil(math.log2(x))


def _merge_coords(values: Iterable[float], tol: float) -> np.ndarray:
    v = np.sort(np.asarray(list(values), dtype=float))
    out = [v[0]]
    for x in v[1:]:
        if x - out[-1] > tol:
            out.append(x)
    return np.asarray(out)


def check_overlaps(rects: Sequence[Rect], tol: float = 1e-12) -> None:
    for i, a in enumerate(rects):
        for b in rects[i + 1:]:
            w = min(a.x1, b.x1) - max(a.x0, b.x0)
            h = min(a.y1, b.y1) - max(a.y0, b.y0)
            if w > tol and h > tol:
                raise GeometryError(f"rectangles overlap: {a} and {b}")


def generate_rect_layout(
    rects: Sequence[Rect],
    target_h: float,
    *,
    walls: Iterable[str] = SIDES,
    axis: bool = False,
) -> Mesh:
    """Conforming structured triangulation of a union of rectangles.

    All rectangle edges become global grid lines.  Each grid interval is split
    into a power-of-two number of equal pieces no longer than ``target_h``,
    and each grid cell into two triangles.

    Parameters
    ----------
    rects : rectangles, non-overlapping except on shared edges
    target_h : maximum element edge length along each axis; a rectangle's
        ``max_h`` lowers it on the grid intervals that rectangle spans
    walls : sides of the bounding box whose edges are tagged FluxWall;
        boundaries of interior holes are always FluxWall
    axis : tag boundary edges on ``x == 0`` as Axis (axisymmetric models)
    """
    rects = list(rects)
    if not rects:
        raise GeometryError("empty layout")
    if not target_h > 0:
        raise ResolutionError("target_h must be positive")
    walls = set(walls)
    if not walls <= SIDES:
        raise GeometryError(f"unknown wall sides {walls - SIDES}")
    scale = max(max(abs(r.x0), abs(r.x1), abs(r.y0), abs(r.y1)) for r in rects)
    scale = max(scale, max(max(r.width, r.height) for r in rects))
    tol = 1e-12 * scale
    check_overlaps(rects, tol)
    smallest = min(min(r.width, r.height) for r in rects)
    if target_h > smallest * (1.0 + 1e-12):
        raise ResolutionError(
            f"target_h={target_h:g} exceeds the smallest rectangle dimension {smallest:g}")

    xs = _merge_coords([c for r in rects for c in (r.x0, r.x1)], tol)
    ys = _merge_coords([c for r in rects for c in (r.y0, r.y1)], tol)

    def local_h(a, b, axis):
        # finest max_h among rectangles spanning the interval (a, b) along axis
        h = target_h
        for r in rects:
            lo, hi = (r.x0, r.x1) if axis == 0 else (r.y0, r.y1)
            if r.max_h is not None and lo <= a + tol and b <= hi + tol:
                h = min(h, r.max_h)
        return h

    def refine(coarse, axis):
        pieces = [coarse[:1]]
        for a, b in zip(coarse[:-1], coarse[1:]):
            n = _pow2_divisions(b - a, local_h(a, b, axis))
            pieces.append(np.linspace(a, b, n + 1)[1:])
        return np.concatenate(pieces)

    xg, yg = refine(xs, 0), refine(ys, 1)
    ncx, ncy = len(xg) - 1, len(yg) - 1

    owner = np.full((ncx, ncy), -1, dtype=np.int64)
    for k, r in enumerate(rects):
        i0 = int(np.searchsorted(xg, r.x0 - tol))
        i1 = int(np.searchsorted(xg, r.x1 - tol))
        j0 = int(np.searchsorted(yg, r.y0 - tol))
        j1 = int(np.searchsorted(yg, r.y1 - tol))
        owner[i0:i1, j0:j1] = k

    ci, cj = np.nonzero(owner >= 0)
    used = np.zeros((ncx + 1, ncy + 1), dtype=bool)
    for di in (0, 1):
        for dj in (0, 1):
            used[ci + di, cj + dj] = True
    node_id = np.full(used.shape, -1, dtype=np.int64)
    ui, uj = np.nonzero(used)
    node_id[ui, uj] = np.arange(len(ui))
    nodes = np.column_stack([xg[ui], yg[uj]])

    p00 = node_id[ci, cj]
    p10 = node_id[ci + 1, cj]
    p11 = node_id[ci + 1, cj + 1]
    p01 = node_id[ci, cj + 1]
    cell_owner = owner[ci, cj]
    anti = np.array([r.cut_corner in ("ll", "ur") for r in rects])[cell_owner]
    t_a = np.where(anti[:, None], np.column_stack([p00, p10, p01]), np.column_stack([p00, p10, p11]))
    t_b = np.where(anti[:, None], np.column_stack([p10, p11, p01]), np.column_stack([p00, p11, p01]))
    triangles = np.empty((2 * len(ci), 3), dtype=np.int64)
    triangles[0::2] = t_a
    triangles[1::2] = t_b
    tri_owner = np.repeat(cell_owner, 2)

    regions = np.array([int(r.region) for r in rects])[tri_owner]
    groups = np.array([r.group for r in rects])[tri_owner]
    cut = [k for k, r in enumerate(rects) if r.cut_corner is not None]
    if cut:
        centroids = nodes[triangles].mean(axis=1)
        for k in cut:
            r = rects[k]
            sel = tri_owner == k
            s = (centroids[sel, 0] - r.x0) / r.width
            t = (centroids[sel, 1] - r.y0) / r.height
            inside = {"ll": s + t < 1.0, "ur": s + t > 1.0, "ul": s < t, "lr": s > t}[r.cut_corner]
            reg = regions[sel]
            reg[inside] = int(r.cut_region)
            regions[sel] = reg

    mesh_tmp = Mesh(nodes, triangles, regions, groups, np.zeros((0, 2)), np.zeros(0))
    outer = mesh_tmp.outer_edges()
    a, b = nodes[outer[:, 0]], nodes[outer[:, 1]]
    xmin, xmax, ymin, ymax = xg[0], xg[-1], yg[0], yg[-1]

    def on(coord_a, coord_b, value):
        return (np.abs(coord_a - value) <= tol) & (np.abs(coord_b - value) <= tol)

    side = {
        "left": on(a[:, 0], b[:, 0], xmin),
        "right": on(a[:, 0], b[:, 0], xmax),
        "bottom": on(a[:, 1], b[:, 1], ymin),
        "top": on(a[:, 1], b[:, 1], ymax),
    }
    on_bbox = np.zeros(len(outer), dtype=bool)
    wall = np.zeros(len(outer), dtype=bool)
    for name, mask in side.items():
        on_bbox |= mask
        if name in walls:
            wall |= mask
    tags = np.zeros(len(outer), dtype=np.int64)
    tags[wall | ~on_bbox] = int(BoundaryTag.FLUX_WALL)
    if axis:
        at_axis = on(a[:, 0], b[:, 0], 0.0)
        tags[at_axis] = int(BoundaryTag.AXIS)
    keep = tags > 0
    return Mesh(nodes, triangles, regions, groups, outer[keep], tags[keep])


# ---------------------------------------------------------------------------
# MSH 2.2 ASCII
# ---------------------------------------------------------------------------

DEFAULT_TAG_MAP: dict[str, Region | BoundaryTag] = {
    "air": Region.AIR,
    "yoke": Region.YOKE,
    "foil_winding": Region.FOIL_WINDING,
    "winding": Region.FOIL_WINDING,
    "flux_wall": BoundaryTag.FLUX_WALL,
    "axis": BoundaryTag.AXIS,
}

_MSH_LINE, _MSH_TRIANGLE, _MSH_POINT = 1, 2, 15


def _resolve_tag(name: str, tag_map: Mapping[str, Region | BoundaryTag]):
    key = name.strip().strip('"').lower()
    lowered = {k.lower(): v for k, v in tag_map.items()}
    if key not in lowered:
        raise TaggingError(f"unknown physical group {name!r}")
    return lowered[key]


def read_msh(text: bytes | str, tag_map: Mapping[str, Region | BoundaryTag] | None = None) -> Mesh:
    """Parse an ASCII MSH 2.2 stream.

    Physical group names (or the bare physical number when the file has no
    ``$PhysicalNames``) are looked up case-insensitively in ``tag_map``.
    Triangles keep their elementary tag as ``groups``.  Point elements are
    ignored; any other element type is a format error.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    tag_map = DEFAULT_TAG_MAP if tag_map is None else tag_map
    lines = iter(text.splitlines())
    sections: dict[str, list[str]] = {}
    for line in lines:
        line = line.strip()
        if not line.startswith("$") or line.startswith("$End"):
            continue
        name = line[1:]
        body = []
        for inner in lines:
            if inner.strip() == f"$End{name}":
                break
            body.append(inner)
        else:
            raise MeshFormatError(f"section ${name} is not terminated")
        sections[name] = body

    if "MeshFormat" not in sections or not sections["MeshFormat"]:
        raise MeshFormatError("missing $MeshFormat")
    fmt = sections["MeshFormat"][0].split()
    if len(fmt) < 2 or not fmt[0].startswith("2.") or fmt[1] != "0":
        raise MeshFormatError(f"only ASCII MSH 2.x is supported, got {' '.join(fmt)!r}")
    for required in ("Nodes", "Elements"):
        if required not in sections:
            raise MeshFormatError(f"missing ${required}")

    names: dict[int, str] = {}
    for row in sections.get("PhysicalNames", [])[1:]:
        parts = row.split(maxsplit=2)
        if len(parts) == 3:
            names[int(parts[1])] = parts[2].strip().strip('"')

    node_rows = sections["Nodes"]
    n_nodes = int(node_rows[0])
    ids = np.empty(n_nodes, dtype=np.int64)
    xy = np.empty((n_nodes, 2))
    for k, row in enumerate(node_rows[1:1 + n_nodes]):
        parts = row.split()
        ids[k] = int(parts[0])
        xy[k] = float(parts[1]), float(parts[2])
    index = {int(i): k for k, i in enumerate(ids)}

    tris, tri_region, tri_group = [], [], []
    edges, edge_tags = [], []
    elem_rows = sections["Elements"]
    for row in elem_rows[1:1 + int(elem_rows[0])]:
        parts = [int(v) for v in row.split()]
        etype, ntags = parts[1], parts[2]
        tags = parts[3:3 + ntags]
        conn = parts[3 + ntags:]
        if etype == _MSH_POINT:
            continue
        if etype not in (_MSH_LINE, _MSH_TRIANGLE):
            raise MeshFormatError(f"unsupported element type {etype}")
        phys = tags[0] if tags else 0
        tag = _resolve_tag(names.get(phys, str(phys)), tag_map)
        try:
            conn = [index[c] for c in conn]
        except KeyError as exc:
            raise MeshFormatError(f"element references unknown node {exc}") from None
        if etype == _MSH_TRIANGLE:
            if not isinstance(tag, Region):
                raise TaggingError(f"triangle group {names.get(phys, phys)!r} is not a region")
            tris.append(conn[:3])
            tri_region.append(int(tag))
            tri_group.append(tags[1] if ntags > 1 else phys)
        else:
            if not isinstance(tag, BoundaryTag):
                raise TaggingError(f"line group {names.get(phys, phys)!r} is not a boundary tag")
            edges.append(conn[:2])
            edge_tags.append(int(tag))

    if not tris:
        raise MeshFormatError("no triangles in mesh")
    tris = np.asarray(tris, dtype=np.int64)
    p = xy[tris]
    area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
        (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    if np.any(area2 == 0.0):
        raise GeometryError("degenerate triangle in mesh file")
    flip = area2 < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    used = np.zeros(n_nodes, dtype=bool)
    used[tris.ravel()] = True
    remap = np.cumsum(used) - 1
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edge_tags = np.asarray(edge_tags, dtype=np.int64)
    keep = used[edges].all(axis=1) if len(edges) else np.zeros(0, dtype=bool)
    return Mesh(xy[used], remap[tris], tri_region, tri_group, remap[edges[keep]], edge_tags[keep])


def write_msh(mesh: Mesh) -> str:
    """Serialize ``mesh`` as ASCII MSH 2.2 (floats at full round-trip precision)."""
    names = {
        ("region", int(r)): (r.name.lower(), 2) for r in Region
    }
    names.update({("boundary", int(b)): (b.name.lower(), 1) for b in BoundaryTag})
    phys_of: dict[tuple[str, int], int] = {}
    present = [("region", int(r)) for r in np.unique(mesh.regions)]
    present += [("boundary", int(b)) for b in np.unique(mesh.boundary_tags)]
    for k, key in enumerate(present, start=1):
        phys_of[key] = k

    out = io.StringIO()
    out.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    out.write(f"$PhysicalNames\n{len(present)}\n")
    for key in present:
        name, dim = names[key]
        out.write(f'{dim} {phys_of[key]} "{name}"\n')
    out.write("$EndPhysicalNames\n")
    out.write(f"$Nodes\n{mesh.n_nodes}\n")
    for k, (x, y) in enumerate(mesh.nodes, start=1):
        out.write(f"{k} {float(x)!r} {float(y)!r} 0\n")
    out.write("$EndNodes\n")
    n_el = len(mesh.boundary_edges) + mesh.n_triangles
    out.write(f"$Elements\n{n_el}\n")
    k = 1
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        out.write(f"{k} 1 2 {phys_of[('boundary', int(tag))]} {int(tag)} {a + 1} {b + 1}\n")
        k += 1
    for (a, b, c), reg, grp in zip(mesh.triangles, mesh.regions, mesh.groups):
        out.write(f"{k} 2 2 {phys_of[('region', int(reg))]} {int(grp)} {a + 1} {b + 1} {c + 1}\n")
        k += 1
    out.write("$EndElements\n")
    return out.getvalue()
