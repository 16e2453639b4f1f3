"""Command-line entry point: ``arasim {spectrum,evolve,sweep,fit,preset}``.

Exit codes: 0 on success, 1 when the input fails validation, 2 when a sweep
finishes with at least one failed point. The worker count defaults to the
``ARASIM_WORKERS`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .csvout import config_hash, read_csv
from .errors import ArasimError
from .runner import SWEEP_KEYS, ConfigError, ExperimentConfig, execute_point, list_presets, load_preset
from .runner import run as run_sweep

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("arasim")


class _Parser(argparse.ArgumentParser):
    # usage errors are validation failures, not partial sweeps
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# flag -> (block, field, type); block None means a top-level field
_FIELDS = {
    "n": ("model", "n_qubits", int),
    "p": ("model", "p_power", int),
    "c": ("model", "up_fraction", str),
    "gamma": ("model", "gamma_over_j", float),
    "q": ("model", "schedule_exponent", int),
    "tau": ("model", "anneal_time", float),
    "eta": ("bath", "eta", float),
    "coupling": ("bath", "coupling", str),
    "omega_c": ("bath", "omega_c", float),
    "temperature": ("bath", "temperature", float),
    "name": (None, "name", str),
    "method": (None, "method", str),
    "basis": (None, "basis", str),
    "seed": (None, "seed", int),
    "s_points": (None, "s_points", int),
    "trajectories": (None, "trajectories", int),
    "p_d": (None, "p_d", float),
    "output": (None, "output", str),
}
_SWEEP_TYPES = {"tau": float, "eta": float, "c": str, "gamma_over_j": float, "n": int, "q": int,
                "coupling": str}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration overrides")
    for flag, (_, field, typ) in _FIELDS.items():
        g.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None,
                       help=f"sets {field}")
    g.add_argument("--no-lamb-shift", action="store_true", help="drop the Lamb-shift Hamiltonian")


def _sweep_arg(text: str) -> tuple[str, list]:
    key, sep, vals = text.partition("=")
    if not sep or key not in SWEEP_KEYS:
        raise argparse.ArgumentTypeError(f"expected KEY=v1,v2,... with KEY in {sorted(SWEEP_KEYS)}")
    typ = _SWEEP_TYPES[key]
    try:
        return key, [typ(v) for v in vals.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value for {key}: {exc}") from None


def _merge(base: dict, args) -> dict:
    cfg = json.loads(json.dumps(base))
    for flag, (block, field, _) in _FIELDS.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        if block is None:
            cfg[field] = val
        else:
            cfg.setdefault(block, {})[field] = val
    if getattr(args, "no_lamb_shift", False):
        cfg.setdefault("bath", {})["lamb_shift"] = False
    for key, vals in getattr(args, "sweep", None) or []:
        cfg.setdefault("sweep", {})[key] = vals
    return cfg


def _load(path) -> dict:
    if path is None:
        return {}
    with Path(path).open() as fh:
        return json.load(fh)


def _report_invalid(exc: ConfigError) -> int:
    print("configuration is invalid:", file=sys.stderr)
    for v in exc.violations:
        print(f"  - {v}", file=sys.stderr)
    return EXIT_INVALID


# ---------------------------------------------------------------- verbs


def cmd_spectrum(args) -> int:
    from .model import AnnealSpec, build_basis, build_operators
    from .spectrum import (adiabatic_timescale, gap_profile, gap_scaling, write_gap_csv, write_scaling_csv,
                           write_spectrum_csv)

    if args.scaling:
        ns = [int(v) for v in args.scaling.split(",")]
        sc = gap_scaling(ns, p_power=args.p, up_fraction=args.c, gamma_over_j=args.gamma,
                         schedule_exponent=args.q, basis=args.basis, n_grid=args.points,
                         n_down=args.n_down)
        for n, g, s in zip(sc.n_qubits, sc.gap_min, sc.s_min):
            print(f"N={n:<4d} min_gap={g:.6e}  s_min={s:.6f}")
        better = "exponential" if sc.prefers_exponential else "polynomial"
        print(f"better fit: {better} (rss {sc.exponential.rss:.3e} vs {sc.polynomial.rss:.3e})")
        if args.out:
            write_scaling_csv(sc, args.out, config_hash=config_hash(vars(args)))
        return EXIT_OK

    spec = AnnealSpec(args.n, args.p, args.c, args.gamma, args.q)
    path = build_operators(spec, build_basis(spec, args.basis))
    grid = np.linspace(0.0, 1.0, args.points)
    prof = gap_profile(path, grid)
    tag = config_hash(vars(args))
    print(f"dimension {path.dimension}; min gap {prof.gap_min:.10g} at s={prof.s_min:.8f}")
    if spec.is_reverse or spec.gamma_over_j > 0:
        try:
            print(f"adiabatic timescale {adiabatic_timescale(path, prof.s_min):.6g}")
        except ArasimError as exc:
            log.warning("adiabatic timescale unavailable: %s", exc)
    if args.out:
        write_spectrum_csv(path, grid, args.out, n_levels=args.levels, config_hash=tag)
    if args.gap_out:
        write_gap_csv(prof, args.gap_out, config_hash=tag)
    return EXIT_OK


def cmd_evolve(args) -> int:
    try:
        cfg = ExperimentConfig.from_dict(_merge(_load(args.config), args))
    except ConfigError as exc:
        return _report_invalid(exc)
    points = cfg.points()
    if len(points) != 1:
        print(f"evolve runs a single point but the configuration has {len(points)}; use 'sweep'",
              file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out) if args.out else cfg.output / points[0].file_name
    out.parent.mkdir(parents=True, exist_ok=True)
    res = execute_point(points[0], out.parent, file_name=out.name)
    if res.status != "ok":
        print(f"run failed: {res.error}", file=sys.stderr)
        return EXIT_PARTIAL
    se = "" if res.p_g_stderr is None else f" +/- {res.p_g_stderr:.3g}"
    print(f"final p_g = {res.p_g:.10g}{se}  ({res.wall_clock:.1f} s) -> {out}")
    return EXIT_OK


def _execute(raw: dict, args) -> int:
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        return _report_invalid(exc)
    if args.output:
        cfg = cfg.with_output(args.output)
    n = len(cfg.points())
    print(f"{cfg.name}: {n} sweep point(s) -> {cfg.output}")
    if args.dry_run:
        for pt in cfg.points():
            print(f"  {pt.file_name}  {pt.label()}")
        return EXIT_OK
    manifest = run_sweep(cfg, workers=args.workers)
    failed = manifest.n_failed
    print(f"done: {n - failed} ok, {failed} failed; summary in {cfg.output / 'summary.csv'}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_sweep(args) -> int:
    return _execute(_merge(_load(args.config), args), args)


def cmd_preset(args) -> int:
    if args.list or not args.name:
        for name, aliases in list_presets().items():
            extra = f"  (aliases: {', '.join(aliases)})" if aliases else ""
            print(f"{name}{extra}")
        return EXIT_OK
    raw = load_preset(args.name)
    if args.show:
        print(json.dumps(raw, indent=2))
        return EXIT_OK
    return _execute(raw, args)


def cmd_fit(args) -> int:
    from .metrics import fit_scaling
    from .model import problem_spectrum

    _, rows = read_csv(args.csv)
    pts = []
    for r in rows:
        if r.get("p_g", "") == "" or r.get("tau", "") == "":
            continue
        pts.append((float(r["tau"]), 1.0 - float(r["p_g"])))
    kw = {"p_d": args.p_d, "tau_ad": args.tau_ad}
    if args.model == "plateau":
        from .metrics import tts

        pts = [tts(t, 1.0 - pe, args.p_d) for t, pe in pts]
    if args.model == "thermal_tail":
        if args.n is None or args.tau_ad is None:
            print("the thermal_tail model needs --n and --tau-ad", file=sys.stderr)
            return EXIT_INVALID
        kw["h0_energies"], kw["h0_degeneracies"] = problem_spectrum(args.n, args.p)
    fit = fit_scaling(pts, args.model, **kw)
    print(json.dumps({"model": fit.model.value, "n_points": fit.n_points, "residual": fit.residual,
                      "parameters": fit.parameters}, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="arasim", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("spectrum", help="instantaneous spectrum and gap scan")
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--p", type=int, default=3)
    sp.add_argument("--c", default="1", help="fraction of up spins in the initial state, e.g. 7/8")
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--q", type=int, default=1)
    sp.add_argument("--basis", choices=["full", "dicke"], default="dicke")
    sp.add_argument("--points", type=int, default=201)
    sp.add_argument("--levels", type=int, default=16)
    sp.add_argument("--scaling", metavar="N1,N2,...", help="minimum gap versus N instead of one scan")
    sp.add_argument("--n-down", type=int, default=None,
                    help="with --scaling, hold the number of down spins fixed instead of --c")
    sp.add_argument("--out", help="spectrum CSV (or scaling CSV with --scaling)")
    sp.add_argument("--gap-out", help="gap CSV")
    sp.set_defaults(func=cmd_spectrum)

    ev = sub.add_parser("evolve", help="single dynamics run")
    ev.add_argument("config", nargs="?", help="JSON configuration (optional)")
    ev.add_argument("--out", help="result CSV path")
    _add_config_flags(ev)
    ev.set_defaults(func=cmd_evolve)

    sw = sub.add_parser("sweep", help="run a configured parameter sweep")
    sw.add_argument("config", help="JSON configuration")
    sw.add_argument("--sweep", action="append", type=_sweep_arg, metavar="KEY=v1,v2",
                    help="replace one sweep axis (repeatable)")
    sw.add_argument("--workers", type=int, default=None)
    sw.add_argument("--dry-run", action="store_true", help="list the points without running them")
    _add_config_flags(sw)
    sw.set_defaults(func=cmd_sweep)

    ft = sub.add_parser("fit", help="fit a scaling model to a table with tau and p_g columns")
    ft.add_argument("csv")
    ft.add_argument("--model", required=True, choices=["landau_zener", "plateau", "power_law", "thermal_tail"])
    ft.add_argument("--p-d", type=float, default=0.99)
    ft.add_argument("--tau-ad", type=float, default=None)
    ft.add_argument("--n", type=int, default=None, help="qubit count, for the thermal-tail energies")
    ft.add_argument("--p", type=int, default=3)
    ft.set_defaults(func=cmd_fit)

    pr = sub.add_parser("preset", help="run or inspect a bundled preset")
    pr.add_argument("name", nargs="?")
    pr.add_argument("--list", action="store_true")
    pr.add_argument("--show", action="store_true", help="print the configuration only")
    pr.add_argument("--output", default=None)
    pr.add_argument("--workers", type=int, default=None)
    pr.add_argument("--dry-run", action="store_true")
    pr.set_defaults(func=cmd_preset)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _report_invalid(exc)
    except ArasimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
