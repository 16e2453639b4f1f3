"""Configured experiments: validation, sweeps, result files and a run manifest.

A configuration is a JSON-compatible mapping::

    {
      "name": "example",
      "method": "ame_direct",              # closed | ame_direct | mcwf
      "basis": "full",                     # full | dicke
      "model": {"n_qubits": 8, "up_fraction": "7/8", "gamma_over_j": 1.0,
                "schedule_exponent": 1, "anneal_time": 250, "p_power": 3},
      "bath": {"eta": 1e-4, "coupling": "independent"},
      "sweep": {"c": ["1", "7/8", "6/8"]},
      "output": "runs/example",
      "seed": 0, "s_points": 101, "trajectories": 5000, "p_d": 0.99
    }

Sweep keys are ``tau``, ``eta``, ``c``, ``gamma_over_j``, ``n``, ``q`` and
``coupling``; the sweep is their Cartesian product. Each point writes one
CSV named after a hash of its own parameters, so re-running a configuration
skips points that are already complete, and extending a sweep only computes
the new points.
"""

from __future__ import annotations

import copy
import enum
import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .bath import BathSpec, CouplingKind
from .csvout import config_hash, read_csv, write_csv
from .errors import ArasimError, DomainError
from .metrics import TTSRecord, tts
from .model import FULL_BASIS_MAX_QUBITS, AnnealSpec, BasisKind, as_fraction, build_basis, build_operators

log = logging.getLogger(__name__)

AME_FULL_MAX_QUBITS = 10
DICKE_MAX_DIMENSION = 2601
AME_MAX_DIMENSION = 1024
MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.csv"
TRAJECTORY_COLUMNS = ("s", "p_g_instantaneous", "trace", "purity", "min_eigenvalue")
ENSEMBLE_COLUMNS = ("s", "mean_pg", "stderr_pg")


class Method(str, enum.Enum):
    CLOSED = "closed"
    AME_DIRECT = "ame_direct"
    MCWF = "mcwf"


SWEEP_KEYS = {
    "tau": ("model", "anneal_time"),
    "eta": ("bath", "eta"),
    "c": ("model", "up_fraction"),
    "gamma_over_j": ("model", "gamma_over_j"),
    "n": ("model", "n_qubits"),
    "q": ("model", "schedule_exponent"),
    "coupling": ("bath", "coupling"),
}

_TOP_DEFAULTS = {"name": "experiment", "method": Method.AME_DIRECT.value, "basis": None, "model": {},
                 "bath": {}, "sweep": {}, "output": "runs/experiment", "seed": 0, "s_points": 101,
                 "trajectories": 5000, "p_d": 0.99, "solver": {}}
_MODEL_KEYS = {"n_qubits", "p_power", "up_fraction", "gamma_over_j", "schedule_exponent", "anneal_time"}
_BATH_KEYS = {"eta", "omega_c", "temperature", "coupling", "lamb_shift"}
_SOLVER_KEYS = {"rtol", "atol", "h_max"}


class ConfigError(DomainError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


# ---------------------------------------------------------------- config


def _normalize(raw: Mapping[str, Any]) -> dict:
    cfg = copy.deepcopy(_TOP_DEFAULTS)
    cfg.update(copy.deepcopy(dict(raw)))
    if cfg["basis"] is None:
        coupling = dict(cfg.get("bath") or {}).get("coupling", CouplingKind.COLLECTIVE.value)
        cfg["basis"] = BasisKind.DICKE.value if coupling == CouplingKind.COLLECTIVE.value else BasisKind.FULL.value
    return cfg


def _point_values(cfg: dict) -> list[dict]:
    sweep = cfg.get("sweep") or {}
    keys = [k for k in SWEEP_KEYS if k in sweep]
    combos = itertools.product(*(sweep[k] for k in keys)) if keys else [()]
    return [dict(zip(keys, combo)) for combo in combos]


def _apply(cfg: dict, values: Mapping[str, Any]) -> dict:
    point = copy.deepcopy(cfg)
    for key, val in values.items():
        block, name = SWEEP_KEYS[key]
        point[block] = dict(point.get(block) or {})
        point[block][name] = val
    point.pop("sweep", None)
    return point


def _working_dimension(spec: AnnealSpec, basis: str) -> int:
    if basis == BasisKind.FULL.value:
        return 2**spec.n_qubits
    return (spec.n_up + 1) * (spec.n_down + 1)


def _located(where: str, block: str, keys, exc: Exception) -> str:
    msg = str(exc)
    head = msg.split(" ", 1)[0]
    if head in keys:
        return f"{where}{block}.{head}: {msg}"
    return f"{where}{block}: {msg}"


def _check_point(point: dict, where: str) -> list[str]:
    out = []
    model, bath = point.get("model") or {}, point.get("bath") or {}
    spec = bspec = None
    try:
        kw = {k: v for k, v in model.items() if k in _MODEL_KEYS}
        if "up_fraction" in kw:
            kw["up_fraction"] = as_fraction(kw["up_fraction"])
        spec = AnnealSpec(**kw)
    except (ArasimError, TypeError, ValueError, ZeroDivisionError) as exc:
        out.append(_located(where, "model", _MODEL_KEYS, exc))
    try:
        bspec = BathSpec(**{k: v for k, v in bath.items() if k in _BATH_KEYS})
    except (ArasimError, TypeError, ValueError) as exc:
        out.append(_located(where, "bath", _BATH_KEYS, exc))
    basis, method = point.get("basis"), point.get("method")
    if bspec is not None and basis == BasisKind.DICKE.value and bspec.coupling is CouplingKind.INDEPENDENT:
        out.append(f"{where}bath.coupling: independent dephasing breaks permutation symmetry "
                   "(use the full basis)")
    if spec is not None and basis in {b.value for b in BasisKind} and method in {m.value for m in Method}:
        dim = _working_dimension(spec, basis)
        if basis == BasisKind.FULL.value:
            cap = AME_FULL_MAX_QUBITS if method == Method.AME_DIRECT.value else FULL_BASIS_MAX_QUBITS
            if spec.n_qubits > cap:
                out.append(f"{where}model.n_qubits: {spec.n_qubits} qubits exceeds the full-basis cap of "
                           f"{cap} for method {method}")
        else:
            cap = AME_MAX_DIMENSION if method == Method.AME_DIRECT.value else DICKE_MAX_DIMENSION
            if dim > cap:
                out.append(f"{where}model: Dicke dimension {dim} exceeds the cap of {cap} for method {method}")
    return out


def validate(config: Mapping[str, Any]) -> list[str]:
    """Every reason ``config`` cannot run, as ``"field.path: message"`` strings; empty when runnable."""
    if not isinstance(config, Mapping):
        return ["<root>: configuration must be a mapping"]
    out = []
    unknown = set(config) - set(_TOP_DEFAULTS) - {"aliases", "description", "version"}
    out += [f"{k}: unknown field" for k in sorted(unknown)]
    cfg = _normalize(config)
    if cfg["method"] not in {m.value for m in Method}:
        out.append(f"method: must be one of {[m.value for m in Method]}, got {cfg['method']!r}")
    if cfg["basis"] not in {b.value for b in BasisKind}:
        out.append(f"basis: must be one of {[b.value for b in BasisKind]}, got {cfg['basis']!r}")
    for block, allowed in (("model", _MODEL_KEYS), ("bath", _BATH_KEYS), ("solver", _SOLVER_KEYS)):
        val = cfg.get(block)
        if not isinstance(val, Mapping):
            out.append(f"{block}: must be a mapping")
            cfg[block] = {}
            continue
        out += [f"{block}.{k}: unknown field" for k in sorted(set(val) - allowed)]
    for key, lo in (("seed", 0), ("s_points", 2), ("trajectories", 1)):
        v = cfg[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            out.append(f"{key}: must be an integer >= {lo}, got {v!r}")
    if not isinstance(cfg["p_d"], (int, float)) or not 0 < cfg["p_d"] < 1:
        out.append(f"p_d: must lie in (0, 1), got {cfg['p_d']!r}")
    if not isinstance(cfg["output"], str) or not cfg["output"]:
        out.append("output: must be a non-empty path string")
    sweep = cfg.get("sweep")
    if not isinstance(sweep, Mapping):
        out.append("sweep: must be a mapping")
        return out
    for key, vals in sweep.items():
        if key not in SWEEP_KEYS:
            out.append(f"sweep.{key}: unknown sweep key (allowed: {sorted(SWEEP_KEYS)})")
        elif not isinstance(vals, list) or not vals:
            out.append(f"sweep.{key}: must be a non-empty list")
    if any(v.startswith("sweep.") for v in out):
        return out
    seen = set()
    for values in _point_values(cfg):
        where = "" if not values else "sweep[" + ", ".join(f"{k}={v}" for k, v in values.items()) + "]."
        for msg in _check_point(_apply(cfg, values), where):
            bare = msg.split("].", 1)[-1]
            if bare not in seen:
                seen.add(bare)
                out.append(msg)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated configuration; build with :meth:`from_dict` or :func:`load_config`."""

    data: dict

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ExperimentConfig":
        problems = validate(raw)
        if problems:
            raise ConfigError(problems)
        return cls(_normalize(raw))

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def method(self) -> Method:
        return Method(self.data["method"])

    @property
    def output(self) -> Path:
        return Path(self.data["output"])

    @property
    def hash(self) -> str:
        # the output directory does not change results, so it stays out of the hash
        return config_hash({k: v for k, v in self.data.items() if k != "output"})

    def points(self) -> list["SweepPoint"]:
        out = []
        for values in _point_values(self.data):
            p = _apply(self.data, values)
            p.pop("output", None)
            p.pop("name", None)
            out.append(SweepPoint(values, p, config_hash(p)))
        return out

    def with_output(self, output) -> "ExperimentConfig":
        d = copy.deepcopy(self.data)
        d["output"] = str(output)
        return ExperimentConfig(d)


def load_config(path) -> ExperimentConfig:
    with Path(path).open() as fh:
        return ExperimentConfig.from_dict(json.load(fh))


# ---------------------------------------------------------------- presets


def _preset_files():
    root = resources.files("arasim") / "presets"
    return sorted((p for p in root.iterdir() if p.name.endswith(".json")), key=lambda p: p.name)


def list_presets() -> dict[str, list[str]]:
    """``{name: aliases}`` for the bundled presets."""
    out = {}
    for p in _preset_files():
        data = json.loads(p.read_text())
        out[data["name"]] = list(data.get("aliases", []))
    return out


def load_preset(name: str) -> dict:
    """Raw configuration of a bundled preset, looked up by name or alias."""
    for p in _preset_files():
        data = json.loads(p.read_text())
        if name == data["name"] or name in data.get("aliases", []):
            return data
    raise DomainError(f"unknown preset {name!r}; available: {sorted(list_presets())}")


# --------------------------------------------------------------- execution


@dataclass(frozen=True)
class SweepPoint:
    values: dict
    config: dict
    hash: str

    @property
    def file_name(self) -> str:
        return f"{self.config['method']}-{self.hash[:16]}.csv"

    def label(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.values.items()) or "single point"


@dataclass
class PointOutcome:
    hash: str
    status: str
    file: str | None
    p_g: float | None = None
    p_g_stderr: float | None = None
    wall_clock: float = 0.0
    error: str | None = None
    values: dict = field(default_factory=dict)


def _specs(point: dict):
    kw = dict(point["model"])
    if "up_fraction" in kw:
        kw["up_fraction"] = as_fraction(kw["up_fraction"])
    return AnnealSpec(**kw), BathSpec(**point.get("bath", {}))


def execute_point(point: SweepPoint, out_dir, *, file_name: str | None = None) -> PointOutcome:
    """Run one sweep point and write its CSV; exceptions become a failed outcome."""
    from .lindblad import integrate_ame
    from .mcwf import TrajectoryConfig, evolve_closed, run_ensemble

    start = time.perf_counter()
    cfg = point.config
    file_name = file_name or point.file_name
    target = Path(out_dir) / file_name
    try:
        spec, bath = _specs(cfg)
        basis = build_basis(spec, BasisKind(cfg["basis"]))
        path = build_operators(spec, basis)
        grid = np.linspace(0.0, 1.0, cfg["s_points"])
        solver = cfg.get("solver") or {}
        method = Method(cfg["method"])
        if method is Method.MCWF and bath.eta > 0:
            tc = TrajectoryConfig(n_trajectories=cfg["trajectories"], seed=cfg["seed"], **solver)
            ens = run_ensemble(path, bath, config=tc, s_grid=grid, workers=1)
            ens.write_csv(target, config_hash=point.hash)
            pg, se = float(ens.final_populations[basis.target_index]), \
                float(ens.final_populations_stderr[basis.target_index])
        elif method is Method.CLOSED or bath.eta == 0:
            closed_kw = {k: v for k, v in solver.items() if k in ("rtol", "atol", "h_max")}
            rec = evolve_closed(path, s_grid=grid, **closed_kw)
            if method is Method.MCWF:
                rows = ((s, p, 0.0) for s, p in zip(grid, rec.ground_population))
                write_csv(target, ENSEMBLE_COLUMNS, rows, config_hash=point.hash)
            else:
                rows = ((s, p, 1.0, 1.0, 0.0) for s, p in zip(grid, rec.ground_population))
                write_csv(target, TRAJECTORY_COLUMNS, rows, config_hash=point.hash)
            pg, se = float(rec.final_populations[basis.target_index]), None
        else:
            res = integrate_ame(path, bath, s_grid=grid, **solver)
            rows = zip(grid, res.ground_population, res.trace, res.purity, res.min_eigenvalue)
            write_csv(target, TRAJECTORY_COLUMNS, rows, config_hash=point.hash)
            pg, se = float(res.final_populations[basis.target_index]), None
    except (ArasimError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return PointOutcome(point.hash, "failed", None, wall_clock=time.perf_counter() - start,
                            error=f"{type(exc).__name__}: {exc}", values=point.values)
    return PointOutcome(point.hash, "ok", file_name, min(max(pg, 0.0), 1.0), se,
                        time.perf_counter() - start, values=point.values)


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    points: dict[str, dict]
    path: Path | None = None

    @property
    def files(self) -> list[str]:
        return sorted(p["file"] for p in self.points.values() if p.get("file"))

    @property
    def n_failed(self) -> int:
        return sum(p["status"] != "ok" for p in self.points.values())

    @property
    def complete(self) -> bool:
        return self.n_failed == 0

    def to_json(self) -> dict:
        return {"config_hash": self.config_hash, "code_version": self.code_version,
                "points": self.points, "files": self.files}

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        os.replace(tmp, path)
        self.path = path

    @classmethod
    def load(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        return cls(data["config_hash"], data["code_version"], data["points"], Path(path))


def _code_version() -> str:
    from . import __version__

    return __version__


def _is_complete(entry: dict | None, out_dir: Path, point: SweepPoint) -> bool:
    if not entry or entry.get("status") != "ok" or not entry.get("file"):
        return False
    f = out_dir / entry["file"]
    if not f.exists():
        return False
    try:
        meta, _ = read_csv(f)
    except (OSError, ValueError):
        return False
    return meta.get("config_hash") == point.hash


def run(config: ExperimentConfig | Mapping[str, Any], *, workers: int | None = None,
        output=None) -> RunManifest:
    """Execute every sweep point not already completed; returns the updated manifest."""
    from .mcwf import default_workers

    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    if output is not None:
        cfg = cfg.with_output(output)
    out_dir = cfg.output
    out_dir.mkdir(parents=True, exist_ok=True)
    points = cfg.points()
    log.info("sweep %s: %d point(s)", cfg.name, len(points))
    mpath = out_dir / MANIFEST_NAME
    old = RunManifest.load(mpath) if mpath.exists() else None
    entries = {} if old is None else dict(old.points)
    manifest = RunManifest(cfg.hash, _code_version(), {}, mpath)
    todo = []
    for pt in points:
        if _is_complete(entries.get(pt.hash), out_dir, pt):
            manifest.points[pt.hash] = entries[pt.hash]
        else:
            todo.append(pt)
    log.info("%d point(s) already complete, %d to run", len(points) - len(todo), len(todo))

    def record(outcome: PointOutcome):
        manifest.points[outcome.hash] = {
            "status": outcome.status, "file": outcome.file, "p_g": outcome.p_g,
            "p_g_stderr": outcome.p_g_stderr, "wall_clock": round(outcome.wall_clock, 3),
            "error": outcome.error, "values": outcome.values}
        manifest.save(mpath)
        if outcome.status != "ok":
            log.warning("point %s failed: %s", outcome.values, outcome.error)

    workers = default_workers() if workers is None else max(1, int(workers))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(execute_point, pt, out_dir) for pt in todo]
            for fut in as_completed(futs):
                record(fut.result())
    else:
        for pt in todo:
            record(execute_point(pt, out_dir))
    # keep manifest order aligned with the sweep order
    manifest.points = {pt.hash: manifest.points[pt.hash] for pt in points}
    manifest.save(mpath)
    write_summary(cfg, manifest)
    return manifest


def summary_records(cfg: ExperimentConfig, manifest: RunManifest) -> list[tuple[SweepPoint, TTSRecord | None]]:
    out = []
    p_d = cfg.data["p_d"]
    for pt in cfg.points():
        e = manifest.points.get(pt.hash)
        if not e or e["status"] != "ok":
            out.append((pt, None))
            continue
        tau = float(pt.config["model"].get("anneal_time", AnnealSpec.anneal_time))
        se = e.get("p_g_stderr")
        out.append((pt, tts(tau, e["p_g"], p_d, se if se is not None else None)))
    return out


def write_summary(cfg: ExperimentConfig, manifest: RunManifest) -> Path:
    keys = [k for k in SWEEP_KEYS if k in (cfg.data.get("sweep") or {}) and k != "tau"]
    cols = ("point", *keys, "tau", "p_g", "p_g_stderr", "tts", "tts_stderr", "flag")
    rows = []
    for pt, rec in summary_records(cfg, manifest):
        vals = [str(pt.values[k]) for k in keys]
        if rec is None:
            tau = float(pt.config["model"].get("anneal_time", AnnealSpec.anneal_time))
            rows.append((pt.hash[:16], *vals, tau, "", "", "", "", "failed"))
        else:
            rows.append((pt.hash[:16], *vals, rec.tau, rec.p_g, rec.p_g_stderr, rec.tts, rec.tts_stderr,
                         rec.flag.value))
    return write_csv(cfg.output / SUMMARY_NAME, cols, rows, config_hash=cfg.hash)


__all__ = ["Method", "SWEEP_KEYS", "ConfigError", "ExperimentConfig", "validate", "load_config",
           "list_presets", "load_preset", "SweepPoint", "PointOutcome", "execute_point", "RunManifest",
           "run", "summary_records", "write_summary"]
