"""Command line front end.

    blowup-lab simulate   --config run.json --out results/
    blowup-lab solve-pde  --config run.json --out results/ --emit-plots
    blowup-lab solve-bsde --config run.json --seed 3
    blowup-lab verify     --suite fast --seed 1 --out reports/
    blowup-lab sweep      --config sweep.json --out sweep/

Exit status: 0 on success (or aggregate pass for ``verify``), 1 on a
numerical failure, 2 on a usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import itertools
import json
import math
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, bsde, checks, config, pde, reports
from .config import ConfigError
from .diffusion import SimulationError, UnexitedPathsError, simulate_batch

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "BLOWUP_LAB_THREADS"

NUMERICAL_ERRORS = (
    SimulationError,
    UnexitedPathsError,
    bsde.UnexitedFractionError,
    pde.NewtonStagnationError,
    pde.MonotonicityError,
    FloatingPointError,
)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _plain(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


class Manifest:
    """Collects the files a command writes and records them in manifest.json."""

    def __init__(self, out: Path, command: str, cfg: dict, seed: int):
        self.out = out
        self.record = {
            "command": command,
            "version": __version__,
            "config_hash": config.config_hash(cfg),
            "seed": seed,
            "started": _now(),
            "files": [],
        }

    def add(self, name: str) -> Path:
        self.record["files"].append(name)
        return self.out / name

    def close(self, **extra):
        self.record.update(extra)
        self.record["finished"] = _now()
        _write_json(self.out / "manifest.json", self.record)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer")
    return 1


def _load(args):
    if not args.config:
        raise UsageError("--config is required for this command")
    cfg = config.load(args.config)
    return cfg


def _warn_unknown(cfg, known=config.KNOWN_KEYS):
    for key in config.unknown_keys(cfg, known):
        print(f"warning: unknown configuration key {key!r} ignored", file=sys.stderr)


def _seed(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**32:
        raise UsageError("seed must be an integer in [0, 2^32)")
    return seed


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _single_point(cfg, domain):
    pts = config.start_points(cfg, domain.dimension)
    if len(pts) > 1:
        raise ConfigError("give a single start point 'x'")
    if domain.signed_distance(pts[0]) < 0:
        raise ConfigError(f"start point {list(pts[0])} lies outside the domain")
    return np.array(pts[0])


def _levels_from(cfg):
    if cfg.get("levels") is not None:
        spec = cfg["levels"]
        levels = checks._levels(spec)
    elif cfg.get("truncation") is not None:
        levels = [float(cfg["truncation"])]
    else:
        raise ConfigError("give 'truncation' or 'levels'")
    if any(not math.isfinite(v) or v <= 0 for v in levels):
        raise ConfigError("truncation levels must be positive and finite")
    return levels


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg, seed, threads, out: Path, emit_plots=False):
    domain, fld, _, _ = config.build_problem(cfg)
    x = _single_point(cfg, domain)
    dt = float(config.numeric(cfg, "dt"))
    batch = simulate_batch(
        fld, domain, x, dt, seed, int(config.numeric(cfg, "n_paths")), float(config.numeric(cfg, "t_max")),
        adapt=cfg.get("adapt"), dt_min=cfg.get("dt_min"), workers=threads,
    )
    man = Manifest(out, "simulate", cfg, seed)
    batch.to_csv(man.add("paths.csv"))
    if emit_plots:
        script = man.add("paths.gp")
        script.write_text(
            "set datafile separator ','\nset key autotitle columnhead\n"
            "set xlabel 'exit time'\nbinwidth = 0.01\nbin(t) = binwidth * floor(t / binwidth)\n"
            "plot 'paths.csv' using (bin($2)):(1.0) smooth freq with boxes title 'exit-time histogram'\n"
        )
    man.close(unexited_fraction=batch.unexited_fraction)
    return EXIT_OK


def cmd_solve_pde(cfg, seed, threads, out: Path, emit_plots=False):
    domain, fld, gen, bd = config.build_problem(cfg)
    levels = _levels_from(cfg)
    try:
        grid = pde.Grid(domain, float(config.numeric(cfg, "h")))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    problem = pde.EllipticProblem(grid, fld, gen, bd)
    field, record = pde.ladder_minimal(problem, levels, delta=cfg.get("delta"), tol=float(config.numeric(cfg, "tol")), keep_fields=True)
    man = Manifest(out, "solve-pde", cfg, seed)
    field.to_csv(man.add("field.csv"))
    pde.write_ladder_json(record, man.add("ladder.json"))
    profile_written = False
    if not bd.blowup.empty and isinstance(bd.blowup.regions[0], config.BoxRegion):
        node = bd.blowup.regions[0].lo
        try:
            axis = checks._inward_axis(domain, node)
            rho, prof = pde.boundary_layer_profile(field, node, axis, gen.q)
        except ValueError:
            rho = None
        if rho is not None:
            with open(man.add("profile.csv"), "w") as fh:
                fh.write("rho,rho_pow_u\n")
                for r, v in zip(rho, prof):
                    fh.write(f"{r!r},{v!r}\n")
            profile_written = True
    if emit_plots:
        script = pde.gnuplot_script("field.csv", domain.dimension)
        if profile_written:
            script += (
                f"pause -1\nset logscale x\nset xlabel 'rho'\n"
                f"plot 'profile.csv' using 1:2 with lines title 'rho^(2/q) u, q={gen.q:g}'\n"
            )
        man.add("field.gp").write_text(script)
    man.close(converged=record.converged, residual=field.residual)
    return EXIT_OK


def cmd_solve_bsde(cfg, seed, threads, out: Path, emit_plots=False):
    man = Manifest(out, "solve-bsde", cfg, seed)
    ode = cfg.get("ode")
    if ode is not None:
        gen = config.build_generator(cfg.get("generator"))
        try:
            xi, horizon = float(ode["xi"]), float(ode["horizon"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("'ode' needs numeric 'xi' and 'horizon'") from exc
        dt = float(config.numeric(cfg, "dt"))
        try:
            y0 = bsde.solve_pure_ode(gen, xi, horizon, dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        result = {
            "config": {"generator": gen.describe(), "ode": {"xi": xi, "horizon": horizon}, "dt": dt},
            "y0_mean": y0,
            "y0_stderr": 0.0,
            "unexited_fraction": 0.0,
            "per_level": [],
            "phi0": None,
            "diagnostics": {"mode": "ode", "flow": float(bsde.closedform.general_flow(gen, xi, horizon))},
        }
        _write_json(man.add("run.json"), result)
        man.close()
        return EXIT_OK

    domain, fld, gen, bd = config.build_problem(cfg)
    x = _single_point(cfg, domain)
    levels = _levels_from(cfg)
    try:
        run_cfg = bsde.RunConfig(
            generator=gen, field=fld, domain=domain, boundary=bd, x=x,
            dt=float(config.numeric(cfg, "dt")), n_paths=int(config.numeric(cfg, "n_paths")), seed=seed,
            truncation=levels[0], t_max=float(config.numeric(cfg, "t_max")),
            n_bins=cfg.get("n_bins"), n_batches=int(config.numeric(cfg, "n_batches")),
            unexited_threshold=float(config.numeric(cfg, "unexited_threshold")),
            estimate_z=bool(config.numeric(cfg, "estimate_z")), z_eps=tuple(config.numeric(cfg, "z_eps")),
            keep_slices=emit_plots,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if len(levels) > 1:
        ladder = bsde.ladder_run(run_cfg, levels, tol=float(config.numeric(cfg, "tol")))
        run = ladder.runs[-1]
    else:
        run = bsde.solve_regression(run_cfg)
    alpha = cfg.get("alpha")
    alpha = bd.min_value if alpha is None else float(alpha)
    if alpha > 0:
        bsde.phi_residual(run, alpha)
    result = run.to_dict()
    _write_json(man.add("run.json"), result)
    if emit_plots and run.slices:
        with open(man.add("slices.csv"), "w") as fh:
            for row in run.slices_csv_rows():
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        man.add("slices.gp").write_text(
            "set datafile separator ','\nset xlabel 't'\nset ylabel 'x'\n"
            "splot 'slices.csv' using 1:2:3 with points palette pt 7 ps 0.3 title 'regression value'\n"
        )
    man.close()
    return EXIT_OK


def cmd_verify(args, cfg, seed, threads, out: Path):
    suite = args.suite or (cfg or {}).get("suite", "fast")
    if suite not in checks.SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(checks.SUITES)}")
    names = (cfg or {}).get("checks")
    if names:
        bad = [n for n in names if n not in checks.REGISTRY]
        if bad:
            raise UsageError(f"unknown checks {bad}")
    overrides = (cfg or {}).get("check_configs") or {}
    results = checks.run_suite(suite, seed, workers=threads, names=names, overrides=overrides)
    man = Manifest(out, "verify", cfg or {"suite": suite}, seed)
    man.add("reports.jsonl").write_text(checks.to_jsonl(results))
    table = reports.summary_table(results)
    man.add("summary.txt").write_text(table + "\n")
    print(table)
    passed = checks.suite_passed(results)
    man.close(suite=suite, verdict="pass" if passed else "fail")
    return EXIT_OK if passed else EXIT_NUMERIC


COMMANDS = {"simulate": cmd_simulate, "solve-pde": cmd_solve_pde, "solve-bsde": cmd_solve_bsde}


def _set_dotted(cfg, key, value):
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def cmd_sweep(cfg, seed, threads, out: Path, emit_plots=False):
    spec = cfg.get("sweep")
    if not isinstance(spec, dict) or spec.get("command") not in COMMANDS or not isinstance(spec.get("parameters"), dict):
        raise ConfigError("'sweep' needs a 'command' (simulate, solve-pde, solve-bsde) and a 'parameters' mapping")
    params = spec["parameters"]
    names = sorted(params)
    for n in names:
        if not isinstance(params[n], list) or not params[n]:
            raise ConfigError(f"sweep parameter {n!r} needs a non-empty list of values")
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    man = Manifest(out, "sweep", cfg, seed)
    index = []
    status = EXIT_OK
    for i, combo in enumerate(itertools.product(*(params[n] for n in names))):
        run_cfg = copy.deepcopy(base)
        for n, v in zip(names, combo):
            _set_dotted(run_cfg, n, v)
        sub = out / f"run_{i:03d}"
        sub.mkdir(exist_ok=True)
        try:
            code = COMMANDS[spec["command"]](run_cfg, seed, threads, sub, emit_plots)
        except NUMERICAL_ERRORS as exc:
            print(f"run_{i:03d}: numerical failure: {exc}", file=sys.stderr)
            code = EXIT_NUMERIC
        status = max(status, code)
        index.append({"run": f"run_{i:03d}", "parameters": dict(zip(names, combo)), "exit_code": code})
    _write_json(man.add("sweep.json"), {"command": spec["command"], "runs": index})
    man.close()
    return status


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="blowup-lab", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "simulate exit times; writes paths.csv"),
        ("solve-pde", "finite-difference truncation ladder; writes field.csv and ladder.json"),
        ("solve-bsde", "regression Monte Carlo for Y_0; writes run.json"),
        ("verify", "run a check suite; writes reports.jsonl and summary.txt"),
        ("sweep", "Cartesian product over parameter lists of another command"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--seed", type=int, help="random seed (overrides the config)")
        s.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--emit-plots", action="store_true", help="also write gnuplot scripts")
        if name == "verify":
            s.add_argument("--suite", help="fast or full")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        threads = _threads(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "verify":
                cfg = config.load(args.config) if args.config else None
                if cfg:
                    _warn_unknown(cfg)
                seed = _seed(args, cfg or {})
                return cmd_verify(args, cfg, seed, threads, _out(args, "verify-out"))
            cfg = _load(args)
            _warn_unknown(cfg)
            seed = _seed(args, cfg)
            out = _out(args, f"{args.command}-out")
            if args.command == "sweep":
                return cmd_sweep(cfg, seed, threads, out, args.emit_plots)
            return COMMANDS[args.command](cfg, seed, threads, out, args.emit_plots)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining validation errors raised by the library constructors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
