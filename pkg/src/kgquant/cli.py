"""Scenario configs, batch runs, sweeps and plot-script emission.

Configs are YAML mappings with a strict schema; every run writes the resolved
config, its content hash and a manifest listing every emitted file.
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from . import __version__
from .errors import SchemaError, ScenarioError
from .field import PRESETS, FieldState, build_field, kge_residual
from .hypersurface import default_domain, default_seed, export_mesh, seam_uniformity, trace_surface
from .quantization import lz_chain_check, normalize_energy
from .surfaces import FlatSurface
from .variational import (
    Region4D,
    classify_boundary,
    field_action,
    field_first_variation,
    gaussian_variation,
)

log = logging.getLogger("kgquant")

CHECKS = ("kge", "variation", "surface", "quantization")
OUTPUT_ROOT_ENV = "KGQUANT_OUTPUT_ROOT"
SWEEP_PARAMS = ("l", "alpha", "amplitude")
SWEEP_COLUMNS = ("value", "n_est", "n_residual", "bs_ratio", "lz_ratio", "error")

_TOP_KEYS = {
    "name", "constants", "preset", "params", "modes", "window", "checks", "grid",
    "tolerances", "averaging", "seed", "output_dir", "energy_target",
}
_GRID_DEFAULTS = {
    "kge_points": 1000,
    "surface_n_r": 9,
    "surface_n_theta": 64,
    "energy_n_r": 24,
    "energy_n_theta": 32,
    "variation_count": 1,
}
_TOL_DEFAULTS = {
    "kge": 1e-10,
    "natural": None,  # None -> 5 alpha^2
    "seam": None,  # None -> 5 alpha^2
    "variation": 1e-6,
}


@dataclass
class ScenarioConfig:
    name: str
    field: dict
    checks: tuple[str, ...] = CHECKS
    grid: dict = dc_field(default_factory=lambda: dict(_GRID_DEFAULTS))
    tolerances: dict = dc_field(default_factory=lambda: dict(_TOL_DEFAULTS))
    averaging: str = "cycle_averaged"
    seed: int = 0
    output_dir: str | None = None
    energy_target: float | None = None

    def resolved(self) -> dict:
        return {
            "name": self.name,
            **self.field,
            "checks": list(self.checks),
            "grid": dict(self.grid),
            "tolerances": dict(self.tolerances),
            "averaging": self.averaging,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "energy_target": self.energy_target,
        }

    @property
    def hash(self) -> str:
        return config_hash(self.resolved())

    def build(self) -> FieldState:
        f = build_field({"name": self.name, **self.field})
        if self.energy_target is not None:
            f = normalize_energy(f, self.energy_target)
        return f


def config_hash(doc: Mapping) -> str:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _sub(raw, key, defaults):
    got = raw.get(key) or {}
    if not isinstance(got, Mapping):
        raise SchemaError(f"'{key}' must be a mapping")
    bad = set(got) - set(defaults)
    if bad:
        raise SchemaError(f"unknown {key} keys: {sorted(bad)}")
    return {**defaults, **got}


def parse_config(raw: Mapping[str, Any]) -> ScenarioConfig:
    """Validate a config mapping; unknown keys anywhere are errors."""
    if not isinstance(raw, Mapping):
        raise SchemaError("config must be a mapping")
    bad = set(raw) - _TOP_KEYS
    if bad:
        raise SchemaError(f"unknown config keys: {sorted(bad)}")
    if "name" not in raw:
        raise SchemaError("config needs a name")
    field = {k: copy.deepcopy(raw[k]) for k in ("constants", "preset", "params", "modes", "window") if raw.get(k) is not None}
    checks = tuple(raw.get("checks") or CHECKS)
    unknown_checks = set(checks) - set(CHECKS)
    if unknown_checks:
        raise SchemaError(f"unknown checks: {sorted(unknown_checks)}")
    averaging = raw.get("averaging", "cycle_averaged")
    if averaging not in ("instantaneous", "cycle_averaged"):
        raise SchemaError(f"unknown averaging mode {averaging!r}")
    energy_target = raw.get("energy_target")
    cfg = ScenarioConfig(
        name=str(raw["name"]),
        field=field,
        checks=tuple(c for c in CHECKS if c in checks),
        grid=_sub(raw, "grid", _GRID_DEFAULTS),
        tolerances=_sub(raw, "tolerances", _TOL_DEFAULTS),
        averaging=averaging,
        seed=int(raw.get("seed", 0)),
        output_dir=raw.get("output_dir"),
        energy_target=None if energy_target is None else float(energy_target),
    )
    try:
        cfg.build()
    except ScenarioError as exc:
        raise SchemaError(str(exc)) from exc
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw)


# ---------------------------------------------------------------------------
# running


@dataclass
class RunManifest:
    config_hash: str
    version: str
    started: str
    finished: str
    output_dir: str
    files: list[str]
    verdicts: dict[str, dict]

    @property
    def ok(self) -> bool:
        return all(v.get("status") != "error" for v in self.verdicts.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=_plain) + "\n"


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def output_root(root=None) -> Path:
    return Path(root or os.environ.get(OUTPUT_ROOT_ENV) or "runs")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12e}"


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


class _Writer:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name


def _check_kge(cfg, field, out):
    rng = np.random.default_rng(cfg.seed)
    n = int(cfg.grid["kge_points"])
    scale = max(10.0, 2.0 * (field.window.support if field.window else 0.0)) / field.constants.mu
    t = rng.uniform(0, 20 * math.pi / field.constants.omega0, n)
    r = rng.uniform(0, scale, n)
    th = rng.uniform(0, 2 * math.pi, n)
    z = rng.uniform(-scale, scale, n)
    res = np.abs(kge_residual(field, t, r, th, z))
    _write_csv(out.path("kge_residuals.csv"), ("t", "r", "theta", "z", "residual"), zip(t, r, th, z, res))
    worst = float(np.max(res))
    tol = float(cfg.tolerances["kge"])
    if field.window is not None:
        # the window is not a KGE solution; its residual is reported only
        return {"status": "reported", "max_residual": worst, "windowed": True}
    return {"status": "pass" if worst < tol else "fail", "max_residual": worst, "tolerance": tol}


def _check_variation(cfg, field, out, mesh):
    rng = np.random.default_rng(cfg.seed)
    k = field.constants
    r_cut = field.window.support if field.window else 10.0 / k.mu
    period = 2 * math.pi / k.omega0
    region = Region4D(FlatSurface(0.0, (0.0, r_cut)), FlatSurface(period, (0.0, r_cut)), r_cut, (-0.75 * r_cut, 0.75 * r_cut))
    rows, worst = [], 0.0
    eps = 1e-4
    for i in range(int(cfg.grid["variation_count"])):
        # the bump must vanish on the lateral boundary: keep it 7.5 sigma inside
        sigma = 0.1 * r_cut
        x, y = rng.uniform(-0.25 * r_cut, 0.25 * r_cut, 2) / math.sqrt(2)
        var = gaussian_variation((0.5 * period, x, y, 0.0), 0.15 * period, sigma, 1.0)
        kw = dict(n_r=32, n_theta=32, n_z=12, n_t=24)
        fv = field_first_variation(field, region, var, **kw)
        fd = (field_action(field, region, var, eps, **kw).value - field_action(field, region, var, -eps, **kw).value) / (2 * eps)
        scale = max(abs(fd), abs(fv.total), 1e-300)
        rel = abs(fd - fv.total) / scale
        worst = max(worst, rel)
        rows.append((i, x, y, sigma, fv.bulk, fv.boundary, fv.total, fd, rel))
    _write_csv(
        out.path("variations.csv"),
        ("index", "x", "y", "sigma", "bulk", "boundary", "total", "finite_difference", "relative_gap"),
        rows,
    )
    alpha = field.alpha
    tol_nat = cfg.tolerances["natural"]
    tol_nat = float(tol_nat) if tol_nat is not None else max(5 * alpha**2, 1e-6)
    flat = classify_boundary(field, FlatSurface(0.3 * period, (0.5 / k.mu, r_cut), n_r=16, n_theta=32), "derivative", tol_nat)
    verdict = {
        "max_relative_gap": worst,
        "flat_surface": {"kind": flat.kind, "max_normalized": flat.max_normalized},
    }
    if mesh is not None:
        nat = classify_boundary(field, mesh, "derivative", tol_nat)
        verdict["natural_surface"] = {"kind": nat.kind, "max_normalized": nat.max_normalized}
    verdict["status"] = "pass" if worst < float(cfg.tolerances["variation"]) else "fail"
    return verdict


def _trace(cfg, field):
    domain = default_domain(field, int(cfg.grid["surface_n_r"]), int(cfg.grid["surface_n_theta"]))
    return trace_surface(field, default_seed(field, domain), domain, cfg.averaging)


def _check_surface(cfg, field, out, mesh):
    export_mesh(mesh, out.path("mesh.csv"), "csv")
    export_mesh(mesh, out.path("mesh.json"), "json")
    _write_csv(
        out.path("seam.csv"),
        ("r", "z", "seam_jump"),
        [(r, z, mesh.seam_jump[i, j]) for i, r in enumerate(mesh.r) for j, z in enumerate(mesh.z)],
    )
    seam = seam_uniformity(mesh, cfg.tolerances["seam"])
    d = mesh.diagnostics
    return {
        "status": "pass" if seam.is_uniform and d["integrable"] else "fail",
        "seam_uniform": seam.is_uniform,
        "seam_mean": seam.mean_jump,
        "seam_relative_spread": seam.relative_spread,
        "integrable": d["integrable"],
        "path_residual": d["path_residual"],
        "max_normal_derivative": d.get("max_normal_derivative"),
    }


def _check_quantization(cfg, field, out, mesh):
    report = lz_chain_check(
        field,
        mesh,
        averaging=cfg.averaging,
        tol_seam=cfg.tolerances["seam"],
        n_r=int(cfg.grid["energy_n_r"]),
        n_theta=int(cfg.grid["energy_n_theta"]),
    )
    out.path("quantization.json").write_text(report.to_json() + "\n")
    flags = report.flags
    return {
        "status": "pass" if flags["quantized"] or flags["no_natural_surface"] else "fail",
        "n_est": report.n_est,
        "n_residual": report.n_residual,
        "bs_ratio": report.bs_ratio,
        **flags,
    }


def run_scenario(cfg: ScenarioConfig, root=None) -> RunManifest:
    """Run the requested checks in dependency order and write the manifest.

    A failing check is recorded with status "error" and the remaining checks
    continue where their inputs exist.
    """
    started = _now()
    out = _Writer(output_root(root) / (cfg.output_dir or cfg.name))
    resolved = cfg.resolved()
    out.path("config.json").write_text(json.dumps({"hash": cfg.hash, "config": resolved}, indent=2, sort_keys=True) + "\n")
    verdicts: dict[str, dict] = {}
    field = cfg.build()
    mesh = None
    if "surface" in cfg.checks or "quantization" in cfg.checks:
        try:
            mesh = _trace(cfg, field)
        except Exception as exc:  # recorded per check
            verdicts["surface"] = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
    steps = {
        "kge": lambda: _check_kge(cfg, field, out),
        "variation": lambda: _check_variation(cfg, field, out, mesh),
        "surface": lambda: _check_surface(cfg, field, out, mesh),
        "quantization": lambda: _check_quantization(cfg, field, out, mesh),
    }
    for name in cfg.checks:
        if name in verdicts:
            continue
        if name in ("surface", "quantization") and mesh is None:
            verdicts[name] = {"status": "error", "error": "no surface available"}
            continue
        try:
            verdicts[name] = steps[name]()
        except Exception as exc:
            log.warning("check %s failed: %s", name, exc)
            verdicts[name] = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
    files = list(out.files) + ["manifest.json"]
    manifest = RunManifest(cfg.hash, __version__, started, _now(), str(out.root), files, verdicts)
    (out.root / "manifest.json").write_text(manifest.to_json())
    return manifest


# ---------------------------------------------------------------------------
# sweeps


def _sweep_config(cfg: ScenarioConfig, parameter: str, value) -> ScenarioConfig:
    preset_name = cfg.field.get("preset")
    if parameter not in SWEEP_PARAMS:
        raise SchemaError(f"cannot sweep {parameter!r}; choose from {', '.join(SWEEP_PARAMS)}")
    if preset_name is None:
        raise SchemaError("sweeps need a preset")
    if parameter == "l" and preset_name != "rotor_l":
        raise SchemaError("sweeping l needs the rotor_l preset")
    if parameter == "alpha" and preset_name == "uniform_oscillator":
        raise SchemaError("uniform_oscillator has no alpha")
    new = copy.deepcopy(cfg)
    params = dict(new.field.get("params") or {})
    params[parameter] = int(value) if parameter == "l" else float(value)
    new.field["params"] = params
    return new


def sweep(cfg: ScenarioConfig, parameter: str, values: Sequence, root=None) -> Path:
    """One CSV row per value; a row that errors is kept with the message."""
    values = list(values)
    if not values:
        raise SchemaError("sweep needs at least one value")
    rows = []
    for value in values:
        sub = _sweep_config(cfg, parameter, value)
        try:
            field = sub.build()
            rep = lz_chain_check(
                field,
                _trace(sub, field),
                averaging=sub.averaging,
                tol_seam=sub.tolerances["seam"],
                n_r=int(sub.grid["energy_n_r"]),
                n_theta=int(sub.grid["energy_n_theta"]),
            )
            rows.append((value, rep.n_est, rep.n_residual, rep.bs_ratio, rep.extras.get("lz_ratio"), ""))
        except Exception as exc:
            rows.append((value, None, None, None, None, f"{type(exc).__name__}: {exc}"))
    out = _Writer(output_root(root) / (cfg.output_dir or cfg.name))
    path = out.path(f"sweep_{parameter}.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([_fmt(v) for v in row[:-1]] + [row[-1]])
    path.write_text(buf.getvalue())
    manifest = {
        "config_hash": cfg.hash,
        "version": __version__,
        "output_dir": str(out.root),
        "sweep": {"parameter": parameter, "values": values},
        "files": [path.name, f"sweep_{parameter}.manifest.json"],
    }
    (out.root / f"sweep_{parameter}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def read_sweep(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# plots


_SURFACE_GP = """\
# corkscrew surface t(x, y) traced from the seed crest
set datafile separator ','
set xlabel 'x'
set ylabel 'y'
set zlabel 't'
set ticslevel 0
splot '{data}' every ::1 using ($1*cos($2)):($1*sin($2)):4 with points pointtype 7 pointsize 0.3 title 'natural surface'
"""
_SEAM_GP = """\
# seam duration against radius
set datafile separator ','
set xlabel 'r'
set ylabel 'seam jump'
plot '{data}' every ::1 using 1:3 with linespoints title 'seam jump'
"""
_ALPHA_GP = """\
# residual against alpha, log-log
set datafile separator ','
set logscale xy
set xlabel 'alpha'
set ylabel 'n residual'
plot '{data}' every ::1 using 1:3 with linespoints title 'n residual'
"""


def emit_plots(manifest_path) -> list[Path]:
    """Write gnuplot scripts next to the data files a manifest references."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    files = doc.get("files", [])
    for name in files:
        if not (base / name).exists() and name != manifest_path.name:
            raise FileNotFoundError(f"manifest references missing file {name}")
    written = []

    def put(name, text):
        p = base / name
        p.write_text(text)
        written.append(p)

    notes = []
    if "mesh.csv" in files:
        put("surface.gp", _SURFACE_GP.format(data="mesh.csv"))
    else:
        notes.append("no mesh in this run: surface plot omitted")
    if "seam.csv" in files:
        put("seam.gp", _SEAM_GP.format(data="seam.csv"))
    sweep_alpha = [f for f in files if f == "sweep_alpha.csv"]
    if sweep_alpha:
        put("residual_alpha.gp", _ALPHA_GP.format(data=sweep_alpha[0]))
    if notes:
        put("plots_README.txt", "\n".join(notes) + "\n")
    return written


# ---------------------------------------------------------------------------
# command line


def _values(text: str, parameter: str):
    items = [v for v in text.split(",") if v.strip()]
    return [int(v) if parameter == "l" else float(v) for v in items]


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kgquant", description="natural-surface quantization lab")
    parser.add_argument("--output-root", default=None, help=f"defaults to ${OUTPUT_ROOT_ENV} or ./runs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_sweep = sub.add_parser("sweep", help="sweep one preset parameter")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p_sweep.add_argument("--values", required=True, help="comma separated")
    p_plot = sub.add_parser("plot", help="emit plot scripts for a manifest")
    p_plot.add_argument("manifest")
    sub.add_parser("presets", help="list presets")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        if args.verb == "presets":
            for name in PRESETS:
                print(name)
            return 0
        if args.verb == "plot":
            for p in emit_plots(args.manifest):
                print(p)
            return 0
        cfg = load_config(args.config)
        if args.verb == "run":
            manifest = run_scenario(cfg, args.output_root)
            print(manifest.to_json(), end="")
            return manifest.exit_code
        path = sweep(cfg, args.param, _values(args.values, args.param), args.output_root)
        print(path)
        return 0
    except (ScenarioError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
