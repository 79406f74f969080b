"""Command-line driver: ``bnls <command> [options]``.

Exit codes: 0 ok, 2 numerical failure, 3 configuration error, 4 missing inputs.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InconclusiveBound, NoBracket, NumericalFailure, Unconverged
from .flow import FlowOptions, propagate, stability_experiment
from .functionals import ModelParams, Problem
from .grid import make_grid
from .minimizer import GroundState, SolveOptions, solve_ground_state
from .snapshot import read_snapshot
from .svg import line_plot

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG, EXIT_MISSING = 0, 2, 3, 4

# section -> key -> (type, default)
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "model": {"d": (int, 1), "n": (int, 1), "alpha": (float, 2.0), "beta": (float, 0.0)},
    # unset grid fields fall back to each command's own default grid
    "grid": {"L": (float, None), "N_x": (int, None), "N_y": (int, None)},
    "solve": {
        "dt": (float, None),
        "tol_el": (float, 1e-9),
        "tol_stat": (float, 1e-9),
        "max_iters": (int, 20000),
        "shift": (float, 0.0),
        "multistart": (int, 3),
        "include_cross": (bool, True),
    },
    "flow": {"dt": (float, 1e-3), "T": (float, 10.0), "record_every": (int, 100)},
    "sweep": {"start": (float, 1.0), "stop": (float, 32.0), "count": (int, 11), "spacing": (str, "log")},
    "run": {"output_dir": (str, "bnls_out"), "seed": (int, 0)},
}


def _convert(section: str, key: str, raw):
    if section not in SCHEMA or key not in SCHEMA[section]:
        raise ConfigError(f"unknown config field {section}.{key}")
    typ, _ = SCHEMA[section][key]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("auto", "none", "")):
        if SCHEMA[section][key][1] is None:
            return None
        raise ConfigError(f"{section}.{key} needs a value")
    try:
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            val = str(raw).strip().lower()
            if val in ("1", "true", "yes", "on"):
                return True
            if val in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: cannot read {raw!r} as {typ.__name__}") from None


def load_config(path: str | None, overrides: dict[str, dict[str, object]]) -> dict:
    """Defaults, then the config file, then command-line overrides."""
    cfg = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    env_out = os.environ.get("BNLS_OUTPUT_DIR")
    if env_out:
        cfg["run"]["output_dir"] = env_out
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} does not exist")
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp.items(section):
                cfg[section][key] = _convert(section, key, raw)
    for section, kv in overrides.items():
        for key, val in kv.items():
            if val is not None:
                cfg[section][key] = _convert(section, key, val)
    return cfg


def _params(cfg) -> ModelParams:
    m = cfg["model"]
    try:
        return ModelParams(m["d"], m["n"], m["alpha"], m["beta"])
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def _grid(cfg, n: int | None = None):
    g, m = cfg["grid"], cfg["model"]
    if all(v is None for v in g.values()):
        return None
    kw = {k: v for k, v in g.items() if v is not None}
    try:
        return make_grid(m["d"], m["n"] if n is None else n, **kw)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def _solve_opts(cfg, **kw) -> SolveOptions:
    s = cfg["solve"]
    try:
        return SolveOptions(
            dt=s["dt"], tol_el=s["tol_el"], tol_stat=s["tol_stat"], max_iters=s["max_iters"],
            shift=s["shift"], multistart=s["multistart"], include_cross=s["include_cross"],
            seed=cfg["run"]["seed"], **kw,
        )
    except ValueError as exc:
        raise ConfigError(f"solve: {exc}") from None


def _flow_opts(cfg) -> FlowOptions:
    f = cfg["flow"]
    try:
        return FlowOptions(dt=f["dt"], T=f["T"], record_every=f["record_every"])
    except ValueError as exc:
        raise ConfigError(f"flow: {exc}") from None


def _problem(kind: str, lam, tau) -> Problem:
    try:
        if kind == "m_1_lambda":
            if lam is None:
                raise ConfigError("problem m_1_lambda requires --lambda")
            return Problem(kind, lam)
        if kind == "mu_1_tau":
            if tau is None:
                raise ConfigError("problem mu_1_tau requires --tau")
            return Problem(kind, tau)
        return Problem(kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _c_grid(cfg) -> list[float]:
    s = cfg["sweep"]
    if not (s["start"] > 0 and s["stop"] > s["start"] and s["count"] >= 2):
        raise ConfigError("sweep: need 0 < start < stop and count >= 2")
    if s["spacing"] == "log":
        return [float(c) for c in np.geomspace(s["start"], s["stop"], s["count"])]
    if s["spacing"] == "linear":
        return [float(c) for c in np.linspace(s["start"], s["stop"], s["count"])]
    raise ConfigError(f"sweep.spacing must be 'linear' or 'log', got {s['spacing']!r}")


def _out_dir(cfg) -> Path:
    d = Path(cfg["run"]["output_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _dump(path: Path, payload: dict, cfg: dict) -> Path:
    doc = {"version": __version__, "config": cfg, **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _check_c(c: float):
    if c is None or not c > 0:
        raise ConfigError("c must be positive")


def _save_state(gs: GroundState, stem: Path, status: str, cfg: dict) -> None:
    # the sidecar keeps the certificate keys at top level so GroundState.load can read it
    gs.save(stem)
    _dump(stem.with_suffix(".json"), {**gs.certificate(), "status": status}, cfg)


def cmd_solve(args, cfg) -> int:
    _check_c(args.c)
    problem = _problem(args.problem, args.lam, args.tau)
    p = _params(cfg)
    grid = _grid(cfg)
    opts = _solve_opts(cfg, init=args.init)
    out = _out_dir(cfg)
    stem = out / (args.name or "ground_state")
    try:
        gs = solve_ground_state(p, args.c, problem, opts, grid)
    except Unconverged as exc:
        if exc.state is not None:
            _save_state(exc.state, stem, "unconverged", cfg)
        print(f"unconverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _save_state(gs, stem, "converged", cfg)
    e = gs.energy.total
    print(f"{gs.problem_tag} c={gs.c:g} energy={e:.12g} theta={gs.theta:.10g} "
          f"el_residual={gs.el_residual:.2e} poho_residual={gs.poho_residual:.2e} y_flat={gs.y_flat}")
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    from .thresholds import check_sweep, sweep_mass, sweep_options, write_sweep_csv

    p = _params(cfg)
    cs = _c_grid(cfg)
    s = cfg["solve"]
    opts = sweep_options(max_iters=s["max_iters"], tol_el=s["tol_el"], multistart=s["multistart"],
                         seed=cfg["run"]["seed"], include_cross=s["include_cross"])
    recs = sweep_mass(p, cs, opts, _grid(cfg), jobs=args.jobs)
    out = _out_dir(cfg)
    write_sweep_csv(recs, out / "sweep.csv")
    diag = check_sweep(recs)
    _dump(out / "sweep.json", {"diagnostics": diag.__dict__, "records": [r.to_dict() for r in recs]}, cfg)
    print(f"wrote {len(recs)} records to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_threshold(args, cfg) -> int:
    from . import thresholds as th

    p = _params(cfg)
    grid = _grid(cfg)
    s = cfg["solve"]
    opts = th.sweep_options(max_iters=s["max_iters"], tol_el=s["tol_el"], multistart=s["multistart"],
                            seed=cfg["run"]["seed"])
    finders = {
        "c0": th.find_c0, "c_plus": th.find_cplus, "c_minus": th.find_cminus,
        "lambda_star": th.find_lambda_star, "tau_star": th.find_tau_star,
    }
    out = _out_dir(cfg)
    try:
        if args.find in ("c_gt0", "c_neq0"):
            rep = th.probe_cgt0_vs_cneq0(p, args.tol, opts=opts, grid=grid)
            payload = rep.to_dict()
        else:
            try:
                rep = finders[args.find](p, args.tol, opts=opts, grid=grid)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            payload = rep.to_dict()
    except NoBracket as exc:
        _dump(out / f"threshold_{args.find}.json",
              {"status": "no_bracket", "message": str(exc), "widest": exc.widest}, cfg)
        print(f"no bracket: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = _dump(out / f"threshold_{args.find}.json", {"status": "ok", "report": payload}, cfg)
    br = payload.get("bracket")
    print(f"{args.find}: bracket {br} -> {path}")
    return EXIT_OK


def cmd_testfn(args, cfg) -> int:
    from .testfunctions import upper_bound_report

    p = _params(cfg)
    out = _out_dir(cfg)
    try:
        rep = upper_bound_report(args.a, args.eps, args.lam, p, args.mode, cfg["solve"]["include_cross"],
                                 grid=_grid(cfg, n=0))
        status, code = "certified", EXIT_OK
    except InconclusiveBound as exc:
        rep, status, code = exc.report, "inconclusive", EXIT_NUMERIC
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _dump(out / "testfn.json", {"status": status, "report": rep.to_dict()}, cfg)
    print(f"gap={rep.gap:.6g} (advantage {rep.advantage:.4g}, I1 {rep.I1:.4g}, I2 {rep.I2:.4g}, "
          f"cross {rep.cross_term:.4g}) status={status}")
    return code


def _initial_state(args, cfg) -> GroundState:
    if getattr(args, "input", None):
        stem = Path(args.input).with_suffix("")
        if not stem.with_suffix(".bnls").exists():
            raise FileNotFoundError(f"missing snapshot {stem.with_suffix('.bnls')}")
        return GroundState.load(stem)
    _check_c(args.c)
    return solve_ground_state(_params(cfg), args.c, "m_c", _solve_opts(cfg), _grid(cfg))


def cmd_evolve(args, cfg) -> int:
    p = _params(cfg)
    if args.input and Path(args.input).suffix == ".bnls" and not Path(args.input).with_suffix(".json").exists():
        u, _ = read_snapshot(args.input)
        traj = propagate(u, p, _flow_opts(cfg))
    else:
        gs = _initial_state(args, cfg)
        traj = propagate(gs.u, p, _flow_opts(cfg), orbit=gs)
    out = _out_dir(cfg)
    traj.write_csv(out / "trajectory.csv")
    if args.snapshots:
        traj.write_snapshots(out / "frames", p)
    _dump(out / "evolve.json", {"mass_drift": traj.mass_drift(), "energy_drift": traj.energy_drift(),
                                "steps": len(traj.times)}, cfg)
    print(f"mass drift {traj.mass_drift():.2e}, energy drift {traj.energy_drift():.2e}")
    return EXIT_OK


def cmd_stability(args, cfg) -> int:
    p = _params(cfg)
    gs = _initial_state(args, cfg)
    res, traj = stability_experiment(gs, args.delta, p, _flow_opts(cfg), seed=cfg["run"]["seed"],
                                     k_stab=args.k_stab)
    out = _out_dir(cfg)
    traj.write_csv(out / "trajectory.csv")
    _dump(out / "stability.json", {"result": res.to_dict()}, cfg)
    print(f"max orbital distance {res.max_orbital_dist:.3e} (threshold {res.threshold:.3e}) "
          f"verdict={'stable' if res.verdict else 'not stable'} valid={res.valid}")
    return EXIT_OK if res.valid else EXIT_NUMERIC


def cmd_report(args, cfg) -> int:
    from .thresholds import read_sweep_csv

    src = Path(args.input_dir or cfg["run"]["output_dir"])
    sweep, traj = src / "sweep.csv", src / "trajectory.csv"
    if not src.is_dir() or not (sweep.exists() or traj.exists()):
        print(f"no sweep.csv or trajectory.csv in {src}", file=sys.stderr)
        return EXIT_MISSING
    made = []
    if sweep.exists():
        rows = read_sweep_csv(sweep)
        cs = [float(r["c"]) for r in rows]
        made.append(line_plot(src / "energy_vs_mass.svg",
                              [("m_c", cs, [float(r["m_c"]) for r in rows]),
                               ("flat reference", cs, [float(r["hat_reference"]) for r in rows])],
                              "ground-state energy", "c", "energy"))
        made.append(line_plot(src / "grad_y_vs_mass.svg",
                              [("|grad_y u|^2", cs, [float(r["grad_y_sq"]) for r in rows])],
                              "torus dependence of the minimizer", "c", "grad_y_sq"))
    if traj.exists():
        import csv

        with traj.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        ts = [float(r["t"]) for r in rows]
        od = [float(r["orbital_dist"]) if r["orbital_dist"] else float("nan") for r in rows]
        made.append(line_plot(src / "orbital_distance.svg", [("distance", ts, od)],
                              "distance to the ground-state orbit", "t", "H2 distance", logy=True))
    for m in made:
        print(m)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bnls", description="Ground states of the biharmonic NLS on R^d x T^n")
    ap.add_argument("--version", action="version", version=f"bnls {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file with [model]/[grid]/... sections")
    common.add_argument("--output-dir", dest="output_dir", help="defaults to $BNLS_OUTPUT_DIR")
    common.add_argument("--seed", type=int)
    common.add_argument("--d", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--L", type=float)
    common.add_argument("--N-x", dest="N_x", type=int)
    common.add_argument("--N-y", dest="N_y", type=int)
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config field")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="compute one ground state")
    s.add_argument("--c", type=float, required=True)
    s.add_argument("--problem", default="m_c", choices=["m_c", "m_1_lambda", "mu_1_tau"])
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--tau", type=float)
    s.add_argument("--init", default="auto")
    s.add_argument("--name", help="output file stem")

    s = sub.add_parser("sweep", parents=[common], help="continuation sweep over the mass")
    s.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("threshold", parents=[common], help="bracket a critical mass or scale")
    s.add_argument("--find", required=True,
                   choices=["c0", "c_plus", "c_minus", "lambda_star", "tau_star", "c_gt0", "c_neq0"])
    s.add_argument("--tol", type=float, default=1e-2)
    s.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("testfn", parents=[common], help="tent-profile competitor certificate")
    s.add_argument("--a", type=float, default=0.9 * math.pi)
    s.add_argument("--eps", type=float, default=0.02 * math.pi)
    s.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    s.add_argument("--mode", choices=["equal_norms", "doubled"])

    for name, helptext in (("evolve", "time-integrate from a ground state or snapshot"),
                           ("stability", "perturb a ground state and track its orbit")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--c", type=float)
        s.add_argument("--input", help="saved ground state (.bnls with .json sidecar) or bare snapshot")
        s.add_argument("--dt", type=float)
        s.add_argument("--T", type=float)
        s.add_argument("--record-every", dest="record_every", type=int)
        if name == "evolve":
            s.add_argument("--snapshots", action="store_true")
        else:
            s.add_argument("--delta", type=float, default=1e-2)
            s.add_argument("--k-stab", dest="k_stab", type=float, default=10.0)

    s = sub.add_parser("report", parents=[common], help="SVG plots from earlier CSV outputs")
    s.add_argument("--input-dir", dest="input_dir")
    return ap


def _overrides(args) -> dict:
    ov: dict[str, dict[str, object]] = {s: {} for s in SCHEMA}
    for key in ("d", "n", "alpha", "beta"):
        ov["model"][key] = getattr(args, key, None)
    for key in ("L", "N_x", "N_y"):
        ov["grid"][key] = getattr(args, key, None)
    ov["run"]["output_dir"] = getattr(args, "output_dir", None)
    ov["run"]["seed"] = getattr(args, "seed", None)
    for key in ("dt", "T", "record_every"):
        ov["flow"][key] = getattr(args, key, None)
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        lhs, val = item.split("=", 1)
        section, key = lhs.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        ov[section][key] = val
    return ov


COMMANDS = {
    "solve": cmd_solve, "sweep": cmd_sweep, "threshold": cmd_threshold, "testfn": cmd_testfn,
    "evolve": cmd_evolve, "stability": cmd_stability, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
