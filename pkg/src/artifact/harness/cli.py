"""Command line entry point: `artifact <subcommand> [flags]`.

Exit codes: 0 pass, 1 acceptance failure (some |z| > 4 or KS p < 0.01),
2 configuration error.
"""

import argparse
import json
import os
import sys

from .config import ConfigError, ExperimentConfig, FactorSpec, Query, load_config
from . import experiments as ex
from .report import write_csv

DEFAULTS = {
    "universality": dict(
        N=60, replicas=2000,
        factors=[FactorSpec(atoms=[0.5, 2.0])],
        # three atoms tuned to the same kappa2/kappa1^2 = 0.36
        compare_factors=[FactorSpec(atoms=[1 - 0.3 * 6 ** 0.5, 1.0, 1 + 0.3 * 6 ** 0.5])],
        queries=[Query(c=[0.3], t=[1.5]), Query(c=[0.5], t=[1.5])]),
    "oracle-smalln": dict(
        N=2, replicas=100000,
        factors=[FactorSpec(atoms=[1.0, 2.0])],
        queries=[Query(c=[0.5], M=[3]), Query(c=[0.3, 0.3], M=[3, 1])]),
    "convergence": dict(queries=[Query(c=[0.5], t=[1.0])], N_list=[50, 100, 200, 400]),
    "sample-paths": dict(N=50, t_max=10.0, steps=100, queries=[Query(c=[0.5], t=[1.0])]),
    "laplace-limit": dict(queries=[Query(c=[0.5], t=[1.0])]),
    "laplace-finite-n": dict(N=100, queries=[Query(c=[0.5], t=[1.0])]),
    "kernel": dict(queries=[Query(c=[1.0], t=[1.0])]),
}


def _floats(s):
    return [float(v) for v in s.split(",")]


def build_parser():
    p = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON document matching ExperimentConfig")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--workers", type=int)
        s.add_argument("--n", type=int, dest="N", help="matrix size N")
        s.add_argument("--replicas", type=int)
        s.add_argument("--c", type=_floats, help="comma-separated exponents (one query)")
        s.add_argument("--t", type=_floats, help="comma-separated times (one query)")
        if name == "sample-paths":
            s.add_argument("--t-max", type=float)
            s.add_argument("--steps", type=int)
            s.add_argument("--scheme", choices=("exact", "magnus2", "euler"))
        if name == "convergence":
            s.add_argument("--n-list", type=lambda v: [int(u) for u in v.split(",")])
    return p


def make_config(args):
    if args.config:
        cfg = load_config(args.config)
        d = cfg.to_dict()
    else:
        d = ExperimentConfig(**DEFAULTS[args.command]).to_dict()
    d["experiment"] = args.command
    for key in ("seed", "out", "workers", "N", "replicas"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    for key, attr in (("t_max", "t_max"), ("steps", "steps"), ("scheme", "scheme"), ("N_list", "n_list")):
        v = getattr(args, attr, None)
        if v is not None:
            d[key] = v
    if args.c is not None or args.t is not None:
        c = args.c or [0.5]
        t = args.t or [1.0] * len(c)
        d["queries"] = [{"c": c, "t": t}]
    return ExperimentConfig.from_dict(d)


def _summary(rep):
    for q in rep.queries[:20]:
        print(json.dumps({k: v for k, v in q.items()}, default=str))
    for s in rep.statistics:
        print(json.dumps(s, default=str))
    for w in rep.warnings:
        print("warning:", w, file=sys.stderr)


def run(args):
    cfg = make_config(args)
    cmd = args.command
    if cmd == "universality":
        rep = ex.run_universality(cfg)
    elif cmd == "oracle-smalln":
        rep = ex.run_oracle_smalln(cfg)
    elif cmd == "convergence":
        q = cfg.queries[0]
        rep = ex.run_convergence_sweep(q.c[0], q.t[0], cfg.N_list, cfg)
    elif cmd in ("laplace-limit", "laplace-finite-n"):
        rep = ex.run_laplace(cfg, finite=cmd == "laplace-finite-n")
    elif cmd == "kernel":
        rep = ex.run_kernel(cfg)
    else:
        rep, rows = ex.run_sample_paths(cfg, replicas=args.replicas or 1)
        stem = "sample_paths"
        rep.write(cfg.out, stem)
        write_csv(os.path.join(cfg.out, f"{stem}_paths.csv"), rows,
                  ["replica", "time", "j", "value"])
        _summary(rep)
        ok = all(s.get("ok", True) for s in rep.statistics)
        return 0 if ok else 1
    rep.write(cfg.out)
    _summary(rep)
    return rep.exit_code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
