"""Command-line entry point: ``foilwinding <command> CONFIG [options]``.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__, oracle
from . import postprocess as pp
from .assembly import AssembledSystem, Material, assemble_system, dump_matrix_market
from .config import Config, bundled_config, load_config
from .errors import ConfigError, FoilWindingError, GeometryError, MeshFormatError, SolverError
from .layouts import resolve_turns
from .mesh import Region
from .solver import Model, solve_frequency, sweep

log = logging.getLogger("foilwinding")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
OUTPUT_ENV = "FOILWINDING_OUTPUT_DIR"
MAX_ORACLE_TURNS = 50


class _Run:
    """Collects timings and results for the manifest."""

    def __init__(self, command: str, config: Config, output: Path):
        self.command = command
        self.config = config
        self.output = output
        self.timings: dict[str, float] = {}
        self.results: dict = {}
        self.files: list[str] = []

    def timed(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def wrote(self, path: Path):
        self.files.append(str(Path(path).relative_to(self.output)))

    def manifest(self, status: str, error: str | None = None) -> dict:
        return {
            "command": self.command,
            "status": status,
            "error": error,
            "config_source": self.config.source,
            "config": self.config.raw,
            "versions": {
                "foilwinding": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pyyaml": yaml.__version__,
            },
            "timings_s": self.timings,
            "results": self.results,
            "files": sorted(self.files),
        }


def _complex(z: complex) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag, "abs": abs(z), "phase_deg": float(pp.phase_deg(z))}


def _build(run: _Run, layout=None) -> AssembledSystem:
    cfg = run.config
    layout = layout or cfg.layout
    mesh = run.timed("mesh", cfg.build_mesh, layout)
    mesh.check(axisymmetric=cfg.symmetry.is_axisymmetric, winding_rect=cfg.winding.rect)
    run.results["mesh"] = {"nodes": mesh.n_nodes, "triangles": mesh.n_triangles}
    return run.timed("assembly", assemble_system, mesh, cfg.symmetry, cfg.winding, cfg.basis(),
                     cfg.tensors(), cfg.materials)


def _cmd_solve(run: _Run, args) -> int:
    system = _build(run)
    out = {}
    for model in run.config.models:
        sol = run.timed(f"solve_{model.value}", solve_frequency, system,
                        2.0 * math.pi * args.freq, run.config.drive, model)
        out[model.value] = {"frequency_hz": args.freq, "impedance": _complex(sol.impedance),
                            "voltage": _complex(sol.voltage), "current": _complex(sol.current),
                            "residual": sol.residual}
    run.results["solve"] = out
    return EXIT_OK


def _cmd_sweep(run: _Run, args) -> int:
    cfg = run.config
    if cfg.sweep is None:
        raise ConfigError("missing section 'sweep'", cfg.source)
    system = _build(run)
    freqs = cfg.sweep.frequencies()
    status = EXIT_OK
    out = {}
    for model in cfg.models:
        res = run.timed(f"sweep_{model.value}", sweep, system, freqs, cfg.drive, model,
                        args.workers)
        path = pp.export_sweep(run.output / f"sweep_{model.value}.csv", res)
        run.wrote(path)
        out[model.value] = {
            "points": len(freqs),
            "failed": len(res.failures),
            "resonances_hz_interpolated": pp.find_resonances(freqs, res.impedance).tolist(),
        }
        if not res.ok:
            status = EXIT_SOLVER
    run.results["sweep"] = out
    if status != EXIT_OK:
        raise SolverError("some sweep frequencies failed; partial results were written")
    return status


def _cmd_profiles(run: _Run, args) -> int:
    system = _build(run)
    out = {}
    for model in run.config.models:
        sol = run.timed(f"solve_{model.value}", solve_frequency, system,
                        2.0 * math.pi * args.freq, run.config.drive, model)
        prof = run.timed("profiles", pp.current_profiles, sol)
        run.wrote(pp.export_profiles_csv(run.output / f"profiles_{model.value}.csv", prof))
        contours = run.timed("contours", pp.flux_contours, sol, args.levels)
        run.wrote(pp.export_contours_csv(run.output / f"contours_{model.value}.csv", contours))
        out[model.value] = {
            "impedance": _complex(sol.impedance),
            "max_pointwise_sum_error": float(np.max(np.abs(prof.sum_error()))),
            "projected_residual": float(np.max(np.abs(pp.projected_current_residual(sol)))),
        }
    run.results["profiles"] = out
    return EXIT_OK


def _cmd_oracle(run: _Run, args) -> int:
    cfg = run.config
    if cfg.sweep is None:
        raise ConfigError("missing section 'sweep'", cfg.source)
    if cfg.winding.turns > MAX_ORACLE_TURNS:
        raise ConfigError(f"oracle-compare resolves every turn; at most {MAX_ORACLE_TURNS} "
                          f"turns are supported, config has {cfg.winding.turns}", cfg.source)
    if cfg.mesh_file is not None:
        raise ConfigError("oracle-compare needs a rectangle layout, not a mesh file", cfg.source)
    try:
        layout = resolve_turns(cfg.layout)
    except GeometryError as exc:
        raise ConfigError(str(exc), cfg.source) from exc
    system = _build(run, layout)
    mats = dict(cfg.materials)
    mats[Region.FOIL_WINDING] = Material(cfg.tensors().nu_perp)
    network = run.timed("ladder_build", oracle.build_ladder, system.mesh, cfg.winding,
                        cfg.symmetry, cfg.sigma_c, cfg.eps_i, mats)
    freqs = cfg.sweep.frequencies()
    res = run.timed("sweep_capacitive", sweep, system, freqs, cfg.drive, Model.CAPACITIVE,
                    args.workers)
    z_ladder = np.array([run.timed("ladder_solve", oracle.ladder_impedance, network, 2 * math.pi * f)
                         for f in freqs])
    z_hom = res.impedance
    path = run.output / "oracle_compare.csv"
    with pp.open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["f_hz", "z_hom_re", "z_hom_im", "z_ladder_re", "z_ladder_im", "rel_diff_abs"])
        for f, a, b in zip(freqs, z_hom, z_ladder):
            rel = abs(a) / abs(b) - 1.0
            w.writerow([pp.fmt_float(x) for x in (f, a.real, a.imag, b.real, b.imag, rel)])
    run.wrote(path)
    f_hom = [run.timed("resonance", pp.refine_resonance, system, a, b)
             for a, b in pp.resonance_brackets(freqs, z_hom)]
    f_lad = [pp.refine_phase_zero(lambda f: oracle.ladder_impedance(network, 2 * math.pi * f), a, b)
             for a, b in pp.resonance_brackets(freqs, z_ladder)]
    run.results["oracle"] = {
        "dc_resistance_ohm": float(network.R.sum()),
        "total_inductance_h": float(network.L.sum()),
        "gap_capacitance_f": network.C.tolist(),
        "resonance_homogenized_hz": f_hom,
        "resonance_ladder_hz": f_lad,
        "first_resonance_ratio": float(f_hom[0] / f_lad[0]) if len(f_hom) and len(f_lad) else None,
        "failed": len(res.failures),
    }
    if not res.ok:
        raise SolverError("some sweep frequencies failed; partial results were written")
    return EXIT_OK


def _cmd_dump(run: _Run, args) -> int:
    system = _build(run)
    paths = run.timed("dump", dump_matrix_market, system, run.output / "matrices")
    for p in paths:
        run.wrote(p)
    run.results["matrices"] = {"field_unknowns": system.n_field, "splines": system.n_splines}
    return EXIT_OK


COMMANDS = {
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "profiles": _cmd_profiles,
    "oracle-compare": _cmd_oracle,
    "dump-matrices": _cmd_dump,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foilwinding",
        description="Frequency-domain simulation of homogenized foil windings.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, freq=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML config path, or the name of a bundled config "
                                      "(cartesian, pot_inductor, window_stack)")
        p.add_argument("--output", type=Path, help=f"output directory (overrides config; "
                                                   f"${OUTPUT_ENV} overrides both)")
        p.add_argument("--model", choices=["standard", "capacitive", "both"],
                       help="override the model selector of the config")
        p.add_argument("--workers", type=int, default=1, help="threads for sweeps")
        p.add_argument("-v", "--verbose", action="store_true")
        if freq:
            p.add_argument("--freq", type=float, required=True, help="frequency in Hz")
        return p

    add("solve", "single frequency solve", freq=True)
    add("sweep", "impedance sweep over the configured frequencies")
    p = add("profiles", "current/voltage profiles and flux lines at one frequency", freq=True)
    p.add_argument("--levels", type=int, default=20, help="number of flux-line levels")
    add("oracle-compare", "resolved-turn ladder network against the homogenized model")
    add("dump-matrices", "write the assembled blocks in Matrix Market format")
    return parser


def _resolve_config(name: str) -> Path:
    path = Path(name)
    if path.exists() or path.suffix in (".yaml", ".yml") or os.sep in name:
        return path
    return bundled_config(name)


def _output_dir(cfg: Config, args) -> Path:
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    if args.output is not None:
        return args.output
    return cfg.output


def _write_manifest(run: _Run, status: str, error: str | None) -> None:
    path = run.output / "manifest.json"
    try:
        run.output.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(run.manifest(status, error), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("solve", "profiles") and not (args.freq >= 0 and math.isfinite(args.freq)):
        print("error: --freq must be a finite non-negative number", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(_resolve_config(args.config))
        if args.model is not None:
            cfg.models = ((Model.STANDARD, Model.CAPACITIVE) if args.model == "both"
                          else (Model(args.model),))
    except (ConfigError, GeometryError, MeshFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    run_state = _Run(args.command, cfg, _output_dir(cfg, args))
    code, error = EXIT_OK, None
    try:
        code = COMMANDS[args.command](run_state, args)
    except SolverError as exc:
        code, error = EXIT_SOLVER, f"solver error: {exc}"
    except (ConfigError, GeometryError, MeshFormatError, ValueError) as exc:
        code, error = EXIT_CONFIG, f"config error: {exc}"
    except OSError as exc:
        code, error = EXIT_IO, f"I/O error: {exc}"
    except FoilWindingError as exc:
        code, error = EXIT_SOLVER, f"error: {exc}"
    if error:
        print(error, file=sys.stderr)
    try:
        _write_manifest(run_state, "ok" if code == EXIT_OK else "failed", error)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
