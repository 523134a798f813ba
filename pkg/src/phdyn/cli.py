"""Command line entry point.

Exit codes: 0 success, 1 a row failed under --strict, 2 usage or config error.
The output directory defaults to ./out and can be overridden by the
PHDYN_OUT environment variable or --out.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .gikn import DescendParams, EpsSchedule, build_gikn_sequence, certify_convergence, save_jsonl
from .orbits import enumerate_base_periodic, orbits_to_csv, periodic_orbits
from .pliss import PlissQuery, pliss_times
from .shadow import estimate_shadowing_constant, shadow_periodic, torus_pseudo_orbit
from .systems import DEFAULT_SYSTEMS, load_system, read_config_file

OUT_ENV = "PHDYN_OUT"


class ConfigError(Exception):
    pass


def _out_dir(args):
    return Path(args.out or os.environ.get(OUT_ENV) or "out")


def _system(args):
    try:
        return load_system(args.system)
    except (ValueError, OSError, KeyError) as exc:
        raise ConfigError(f"cannot load system {args.system!r}: {exc}") from None


def cmd_systems_list(args):
    for name in sorted(DEFAULT_SYSTEMS):
        s = load_system(name)
        line = f"{name}: {json.dumps(s.to_config(), sort_keys=True)}"
        if s.kind == "torus":
            up, down = s.partial_hyperbolicity_margin()
            line += f" margin=({up:.4f}, {down:.4f})"
        print(line)
    return 0


def cmd_orbits_find(args):
    system = _system(args)
    if args.period < 1:
        raise ConfigError("--period must be >= 1")
    base = enumerate_base_periodic(system.base, args.period)
    print(f"base points of period dividing {args.period}: {len(base)}")
    for b in base:
        print("  " + (" ".join(map(str, b)) if system.kind == "shift" else f"({b[0]:.17g}, {b[1]:.17g})"))
    text = orbits_to_csv(periodic_orbits(system, args.period))
    print(text, end="")
    if args.out:
        out = _out_dir(args)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"orbits_{system.kind}_{args.period}.csv").write_text(text, encoding="utf-8")
    return 0


def _read_values(path):
    vals = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                for cell in row:
                    cell = cell.strip()
                    if cell and not cell.startswith("#"):
                        vals.append(float(cell))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return vals


def cmd_pliss_check(args):
    a = _read_values(args.input)
    try:
        q = PlissQuery(tuple(a), args.b, args.c, args.cprime, exact=args.exact)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = pliss_times(q)
    print("indices: " + " ".join(map(str, res.indices)))
    print(f"proportion: {res.proportion:.17g}")
    print(f"guaranteed: {float(q.guaranteed_proportion):.17g}")
    return 0


def cmd_shadow_run(args):
    system = _system(args)
    if system.kind != "torus":
        raise ConfigError("shadow run works on torus systems; symbolic plans run through experiments")
    orbits = [o for o in periodic_orbits(system, args.period) if abs(o.exponent) > args.tol_hyp]
    if not orbits:
        raise ConfigError(f"no hyperbolic orbit of period {args.period}")
    orbit = max(orbits, key=lambda o: abs(o.exponent))
    rng = np.random.default_rng(args.seed)
    results = []
    for d in args.d:
        for _ in range(args.samples):
            plan = torus_pseudo_orbit(system, orbit, d, rng)
            res = shadow_periodic(system, plan)
            results.append(res)
            print(json.dumps({"d": d, **res.to_dict()}))
    L = estimate_shadowing_constant(results)
    print(json.dumps({"L": L.L, "d0": L.d0}))
    return 0


def cmd_gikn_build(args):
    system = _system(args)
    params = DescendParams(rho=args.rho, zeta=args.zeta, ratio_high=args.ratio_high)
    g0 = ex.initial_orbit(system, args.lambda0)
    seq = build_gikn_sequence(system, g0, EpsSchedule(args.eps0, 0.5), params, args.steps)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    save_jsonl(seq, out / "gikn.jsonl")
    rep = certify_convergence(seq, args.depth) if len(seq.orbits) > 1 else {"ok": False}
    (out / "gikn_report.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps({k: rep.get(k) for k in ("periods", "exponents", "rho_fit", "prod_kappa", "ok")}))
    if seq.stopped:
        print(f"stopped: {seq.stopped}", file=sys.stderr)
    return 0 if (rep["ok"] or not args.strict) else 1


def cmd_experiment(args):
    data = {}
    if args.config:
        try:
            data = read_config_file(args.config)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        data = data.get(args.name, data) if isinstance(data, dict) else data
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        cfg = ex.ExperimentConfig.from_mapping(data, experiment=args.name)
        if cfg.experiment != args.name:
            raise ValueError(f"config is for {cfg.experiment!r}, not {args.name!r}")
        cfg.system_obj()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    table = ex.RUNNERS[args.name](cfg)
    csv_path, json_path = ex.write_outputs(table, _out_dir(args))
    sys.stdout.write(ex.to_csv(table))
    print(f"wrote {csv_path} and {json_path}", file=sys.stderr)
    return 1 if (args.strict and not table.passed) else 0


def build_parser():
    p = argparse.ArgumentParser(prog="phdyn", description=__doc__.splitlines()[0])
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("--strict", action="store_true", help="exit 1 when any row fails")
    sub = p.add_subparsers(dest="group")
    # the same flags are accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--strict", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    g = sub.add_parser("systems", help="model systems").add_subparsers(dest="action")
    g.add_parser("list", parents=[common], help="print the default systems").set_defaults(func=cmd_systems_list)

    g = sub.add_parser("orbits", help="periodic orbits").add_subparsers(dest="action")
    q = g.add_parser("find", parents=[common], help="base points and periodic orbits of a given period")
    q.add_argument("--system", default="torus", help="default system name or config path")
    q.add_argument("--period", type=int, required=True)
    q.set_defaults(func=cmd_orbits_find)

    g = sub.add_parser("pliss", help="Pliss times").add_subparsers(dest="action")
    q = g.add_parser("check", parents=[common], help="indices whose backward averages stay above c'")
    q.add_argument("--input", required=True, help="CSV of sequence values")
    q.add_argument("--b", type=float, required=True, help="upper bound of the sequence")
    q.add_argument("--c", type=float, required=True, help="mean threshold")
    q.add_argument("--cprime", type=float, required=True, help="target threshold")
    q.add_argument("--exact", action="store_true", help="compare in rational arithmetic")
    q.set_defaults(func=cmd_pliss_check)

    g = sub.add_parser("shadow", help="shadowing runs").add_subparsers(dest="action")
    q = g.add_parser("run", parents=[common], help="shadow perturbed torus periodic orbits")
    q.add_argument("--system", default="torus")
    q.add_argument("--period", type=int, default=4)
    q.add_argument("--d", type=float, nargs="+", default=[1e-3, 1e-4, 1e-5])
    q.add_argument("--samples", type=int, default=10)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tol-hyp", type=float, default=1e-3)
    q.set_defaults(func=cmd_shadow_run)

    g = sub.add_parser("gikn", help="GIKN sequences").add_subparsers(dest="action")
    q = g.add_parser("build", parents=[common], help="build and certify a sequence")
    q.add_argument("--system", default="shift")
    q.add_argument("--steps", type=int, default=6)
    q.add_argument("--lambda0", type=float, default=0.1)
    q.add_argument("--eps0", type=float, default=1e-2)
    q.add_argument("--rho", type=float, default=15.0)
    q.add_argument("--zeta", type=float, default=0.5)
    q.add_argument("--ratio-high", type=float, default=0.6)
    q.add_argument("--depth", type=int, default=64)
    q.set_defaults(func=cmd_gikn_build)

    q = sub.add_parser("experiment", parents=[common], help="run an experiment")
    q.add_argument("name", choices=sorted(ex.RUNNERS))
    q.add_argument("--config", help="YAML or JSON config file")
    q.add_argument("--seed", type=int)
    q.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
