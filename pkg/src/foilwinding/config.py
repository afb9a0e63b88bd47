"""YAML run configuration with line-addressed validation errors.

The schema is documented in ``data/config_schema.md``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .bspline import BSplineBasis
from .errors import ConfigError, GeometryError, MeshFormatError, TaggingError
from .homogenization import EPS0, NU0, FoilMaterials, HomogenizedTensors, mix
from .layouts import Layout, PotGeometry, cartesian_box, pot_inductor, window_stack
from .assembly import Material
from .mesh import BoundaryTag, Mesh, Rect, Region, Symmetry, read_msh
from .solver import CurrentDrive, Drive, Model, VoltageDrive
from .winding import FoilWindingSpec

SECTIONS = ("geometry", "winding", "materials", "drive", "sweep")
REGION_NAMES = {"air": Region.AIR, "yoke": Region.YOKE, "foil_winding": Region.FOIL_WINDING}


class _Node(dict):
    """Mapping that remembers the source line of itself and of each key."""

    line: int = 0
    key_lines: dict


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _Node()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


class _Reader:
    """Typed access into one config mapping with file:line error locations."""

    def __init__(self, data: _Node, path: str, source: str):
        self.data = data
        self.path = path
        self.source = source

    def where(self, key=None) -> str:
        line = self.data.key_lines.get(key, self.data.line) if key is not None else self.data.line
        name = f"{self.path}.{key}" if key is not None and self.path else (key or self.path)
        return f"{self.source}:{line} ({name})" if name else f"{self.source}:{line}"

    def error(self, msg, key=None):
        return ConfigError(msg, self.where(key))

    def has(self, key) -> bool:
        return key in self.data

    def section(self, key, required=True) -> "_Reader | None":
        if key not in self.data:
            if required:
                raise self.error(f"missing section '{key}'")
            return None
        value = self.data[key]
        if not isinstance(value, _Node):
            raise self.error(f"'{key}' must be a mapping", key)
        return _Reader(value, f"{self.path}.{key}" if self.path else key, self.source)

    def get(self, key, default=Any):
        if key not in self.data:
            if default is Any:
                raise self.error(f"missing key '{key}'")
            return default
        return self.data[key]

    def number(self, key, default=Any, positive=False, nonnegative=False) -> float:
        value = self.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"'{key}' must be a number, got {value!r}", key)
        value = float(value)
        if not np.isfinite(value):
            raise self.error(f"'{key}' must be finite", key)
        if positive and not value > 0:
            raise self.error(f"'{key}' must be positive, got {value}", key)
        if nonnegative and value < 0:
            raise self.error(f"'{key}' must be non-negative, got {value}", key)
        return value

    def integer(self, key, default=Any, minimum=None) -> int:
        value = self.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(f"'{key}' must be an integer, got {value!r}", key)
        if minimum is not None and value < minimum:
            raise self.error(f"'{key}' must be >= {minimum}, got {value}", key)
        return value

    def choice(self, key, options, default=Any) -> str:
        value = self.get(key, default)
        if value not in options:
            raise self.error(f"'{key}' must be one of {sorted(options)}, got {value!r}", key)
        return value

    def pair(self, key, default=Any, positive=False) -> tuple[float, float]:
        value = self.get(key, default)
        if not (isinstance(value, (list, tuple)) and len(value) == 2
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            raise self.error(f"'{key}' must be a list of two numbers", key)
        if positive and not all(v > 0 for v in value):
            raise self.error(f"'{key}' entries must be positive", key)
        return float(value[0]), float(value[1])


@dataclass
class SweepConfig:
    f_min: float
    f_max: float
    points: int
    spacing: str = "log"

    def frequencies(self) -> np.ndarray:
        if self.points == 1:
            return np.array([self.f_min])
        if self.spacing == "log":
            return np.logspace(np.log10(self.f_min), np.log10(self.f_max), self.points)
        return np.linspace(self.f_min, self.f_max, self.points)


@dataclass
class Config:
    layout: Layout
    mesh_size: float
    winding_mesh_size: float | None
    mesh_file: Path | None
    mesh_tags: dict | None
    n_splines: int
    sigma_c: float
    eps_i: float
    materials: dict
    winding_mu_r: float
    drive: Drive
    sweep: SweepConfig | None
    models: tuple[Model, ...]
    output: Path
    raw: dict = field(repr=False, default_factory=dict)
    source: str = ""

    @property
    def winding(self) -> FoilWindingSpec:
        return self.layout.winding

    @property
    def symmetry(self) -> Symmetry:
        return self.layout.symmetry

    def tensors(self) -> HomogenizedTensors:
        nu_c = NU0 / self.winding_mu_r
        return mix(FoilMaterials(nu_c, NU0, self.sigma_c, EPS0, self.eps_i,
                                 self.winding.fill_factor))

    def basis(self) -> BSplineBasis:
        return BSplineBasis(self.n_splines, self.winding.alpha_interval)

    def build_mesh(self, layout: Layout | None = None) -> Mesh:
        layout = layout or self.layout
        if self.mesh_file is not None and layout is self.layout:
            try:
                text = self.mesh_file.read_bytes()
            except OSError as exc:
                raise IOError(f"cannot read mesh file {self.mesh_file}: {exc}") from exc
            return read_msh(text, self.mesh_tags)
        return layout.mesh(self.mesh_size, self.winding_mesh_size)


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_to_plain(v) for v in obj]
    return obj


def _winding_spec(w: _Reader, defaults: dict) -> FoilWindingSpec:
    axis_names = {"x": 0, "r": 0, 0: 0, "y": 1, "z": 1, 1: 1}
    axis = w.get("alpha_axis", defaults.get("alpha_axis", "x"))
    if axis not in axis_names:
        raise w.error("'alpha_axis' must be x/r or y/z", "alpha_axis")
    center = w.pair("center", defaults.get("center", Any)) if "center" in defaults or w.has("center") \
        else w.pair("center")
    try:
        return FoilWindingSpec(
            w.integer("turns", defaults.get("turns", Any), minimum=2),
            w.number("thickness", defaults.get("thickness", Any), positive=True),
            w.number("height", defaults.get("height", Any), positive=True),
            w.number("fill_factor", defaults.get("fill_factor", Any), positive=True),
            center, axis_names[axis])
    except GeometryError as exc:
        raise w.error(str(exc)) from exc


def _rect_layout(g: _Reader, spec: FoilWindingSpec, symmetry: Symmetry) -> Layout:
    items = g.get("rectangles")
    if not isinstance(items, list) or not items:
        raise g.error("'rectangles' must be a non-empty list", "rectangles")
    rects = []
    for k, item in enumerate(items):
        if not isinstance(item, _Node):
            raise g.error(f"rectangle {k} must be a mapping", "rectangles")
        r = _Reader(item, f"geometry.rectangles[{k}]", g.source)
        x0, x1 = r.pair("x")
        y0, y1 = r.pair("y")
        region = REGION_NAMES[r.choice("region", REGION_NAMES)]
        cut = r.get("cut_corner", None)
        cut_region = REGION_NAMES[r.choice("cut_region", REGION_NAMES)] if cut else None
        try:
            rects.append(Rect(x0, x1, y0, y1, region, cut_corner=cut, cut_region=cut_region))
        except GeometryError as exc:
            raise r.error(str(exc)) from exc
    walls = g.get("flux_walls", ["left", "right", "bottom", "top"])
    if not isinstance(walls, list) or not set(walls) <= {"left", "right", "bottom", "top"}:
        raise g.error("'flux_walls' must list sides among left/right/bottom/top", "flux_walls")
    return Layout(tuple(rects), symmetry, spec, frozenset(walls), symmetry.is_axisymmetric)


def _geometry(g: _Reader, w: _Reader) -> tuple[Layout, Path | None]:
    preset = g.choice("preset", {"cartesian_box", "pot_inductor", "window_stack", "none"}, "none")
    turns = w.integer("turns", minimum=2)
    lam = w.number("fill_factor", positive=True)
    if not lam < 1:
        raise w.error("'fill_factor' must lie in (0, 1)", "fill_factor")
    mesh_file = g.get("mesh_file", None)
    try:
        if preset == "cartesian_box":
            layout = cartesian_box(turns, lam, w.number("thickness", 0.01, positive=True),
                                   w.number("height", 0.02, positive=True),
                                   g.pair("box", (0.03, 0.04), positive=True),
                                   g.number("length_z", 0.3, positive=True))
        elif preset == "window_stack":
            layout = window_stack(turns, lam, w.number("thickness", 0.01, positive=True),
                                  w.number("height", 0.02, positive=True),
                                  g.number("gap", 0.01, positive=True),
                                  g.number("length_z", 0.3, positive=True))
        elif preset == "pot_inductor":
            pot = g.section("pot", required=False)
            kw = {}
            if pot is not None:
                for name in ("outer_radius", "half_height", "wall", "limb_radius", "air_gap",
                             "winding_half_height", "chamfer", "margin"):
                    if pot.has(name):
                        kw[name] = pot.number(name, positive=True)
                if pot.has("winding_r"):
                    kw["winding_r"] = pot.pair("winding_r", positive=True)
            layout = pot_inductor(turns, lam, PotGeometry(**kw))
        else:
            sym_kind = g.choice("symmetry", {"cartesian", "axisymmetric"})
            symmetry = (Symmetry.axisymmetric() if sym_kind == "axisymmetric"
                        else Symmetry.cartesian(g.number("length_z", positive=True)))
            spec = _winding_spec(w, {})
            if mesh_file is not None:
                layout = Layout((), symmetry, spec, frozenset(), symmetry.is_axisymmetric)
            else:
                layout = _rect_layout(g, spec, symmetry)
    except GeometryError as exc:
        raise g.error(str(exc)) from exc
    return layout, (Path(mesh_file) if mesh_file is not None else None)


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> Config:
    try:
        data = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"invalid YAML: {exc}", where) from exc
    if not isinstance(data, _Node):
        raise ConfigError("configuration must be a mapping", source)
    root = _Reader(data, "", source)
    for name in ("geometry", "winding", "materials"):
        root.section(name)
    g, w, m = root.section("geometry"), root.section("winding"), root.section("materials")
    unknown = set(data) - set(SECTIONS) - {"model", "output"}
    if unknown:
        key = sorted(unknown)[0]
        raise root.error(f"unknown section '{key}'", key)

    layout, mesh_file = _geometry(g, w)
    if mesh_file is not None and base_dir is not None and not mesh_file.is_absolute():
        mesh_file = base_dir / mesh_file
    mesh_size = g.number("mesh_size", positive=True)
    winding_mesh_size = g.number("winding_mesh_size", None, positive=True) \
        if g.has("winding_mesh_size") else None
    n_splines = w.integer("n_splines", minimum=3)
    mesh_tags = None
    if g.has("mesh_tags"):
        tags = g.section("mesh_tags")
        targets = {**REGION_NAMES, "flux_wall": BoundaryTag.FLUX_WALL, "axis": BoundaryTag.AXIS}
        mesh_tags = {str(k): targets[tags.choice(k, targets)] for k in tags.data}

    sigma_c = m.number("sigma_c", positive=True)
    eps_i = m.number("eps_i_rel", positive=True) * EPS0
    mu = m.section("mu_r", required=False)
    sig = m.section("sigma", required=False)
    materials = {}
    for name, region in REGION_NAMES.items():
        if region == Region.FOIL_WINDING:
            continue
        mu_r = mu.number(name, 1.0, positive=True) if mu is not None else 1.0
        sigma = sig.number(name, 0.0, nonnegative=True) if sig is not None else 0.0
        materials[region] = Material(NU0 / mu_r, sigma)
    winding_mu_r = mu.number("foil_winding", 1.0, positive=True) if mu is not None else 1.0

    d = root.section("drive", required=False)
    if d is None:
        drive: Drive = CurrentDrive(1.0)
    else:
        kind = d.choice("kind", {"current", "voltage"}, "current")
        amp = d.number("amplitude", 1.0)
        if amp == 0:
            raise d.error("'amplitude' must be nonzero", "amplitude")
        drive = CurrentDrive(amp) if kind == "current" else VoltageDrive(amp)

    s = root.section("sweep", required=False)
    sweep = None
    if s is not None:
        sweep = SweepConfig(s.number("f_min", positive=True), s.number("f_max", positive=True),
                            s.integer("points", minimum=1), s.choice("spacing", {"log", "linear"}, "log"))
        if sweep.f_max < sweep.f_min:
            raise s.error("'f_max' must not be below 'f_min'", "f_max")

    model = root.choice("model", {"standard", "capacitive", "both"}, "capacitive")
    models = (Model.STANDARD, Model.CAPACITIVE) if model == "both" else (Model(model),)
    out = root.get("output", "output")
    if not isinstance(out, str):
        raise root.error("'output' must be a path string", "output")
    output = Path(out)
    return Config(layout, mesh_size, winding_mesh_size, mesh_file, mesh_tags, n_splines, sigma_c, eps_i,
                  materials, winding_mu_r, drive, sweep, models, output, _to_plain(data), source)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IOError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path), path.parent)


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package (``cartesian``, ``pot_inductor``, ...)."""
    path = Path(__file__).parent / "data" / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


__all__ = ["Config", "SweepConfig", "parse_config", "load_config", "bundled_config",
           "MeshFormatError", "TaggingError"]
