"""Command-line entry point.

Exit codes: 0 ok, 2 invalid input, 3 numerical failure or failed hard
invariant, 4 I/O error. The default output root is ``$WEYLSYS_OUT`` or
``./weylsys-out``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from .config import load_config
from .errors import NumericalError, ValidationError, WeylSysError
from .pipeline import STAGES, TABLES, emit, load_result, persist, run_pipeline

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
ENV_OUT = "WEYLSYS_OUT"

log = logging.getLogger("weylsys")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weylsys", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        s = sub.add_parser(stage, help=f"run the pipeline through '{stage}'")
        s.add_argument("--config", action="append", required=True, metavar="PATH",
                       help="problem file; give it twice for compare")
        s.add_argument("--out", default=None, help=f"output root (default ${ENV_OUT})")
        s.add_argument("--rho-min", type=float)
        s.add_argument("--rho-max", type=float)
        s.add_argument("--rho-count", type=int)
        s.add_argument("--tol", type=float, help="successive-approximation tolerance")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--format", choices=("csv", "json"), default="csv")
    e = sub.add_parser("emit", help="write tables from a saved result")
    e.add_argument("--result", required=True, metavar="PATH")
    e.add_argument("--what", choices=(*TABLES, "all"), default="all")
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("--out", default=None)
    return p


def _out_root(arg) -> str:
    return arg or os.environ.get(ENV_OUT) or "weylsys-out"


def _apply_overrides(cfg, args):
    rho = {k: v for k, v in (("min", args.rho_min), ("max", args.rho_max),
                             ("count", args.rho_count)) if v is not None}
    if rho:
        cfg.rho = dataclasses.replace(cfg.rho, **rho)
        if not 0 < cfg.rho.min <= cfg.rho.max or cfg.rho.count < 1:
            raise ValidationError("rho flags need 0 < min <= max and count >= 1")
    if args.tol is not None:
        if args.tol <= 0:
            raise ValidationError("--tol must be positive")
        cfg.tol = dataclasses.replace(cfg.tol, picard=args.tol)
    return cfg


def _summary(res) -> list[str]:
    lines = [f"run {res.run_id}  stage={res.stage}  config={res.config_hash[:12]}"]
    if res.delta0:
        for r in res.delta0:
            m = min(abs(complex(*z)) for z in r["delta0"])
            lines.append(f"  sector {r['sector']}: min |Delta0_k| = {m:.4g}")
    if res.compare:
        c = res.compare
        lines.append(f"  max ||P - I|| = {c['max_P_minus_I']:.3e}   "
                     f"max rel ||v~ - v|| = {c['max_v_rel_diff']:.3e}   witness = {c['witness']}")
    for c in res.checks:
        flag = "ok" if c["passed"] else ("FAIL" if c["hard"] else "note")
        lines.append(f"  [{flag}] {c['name']}: {c['value']:.3e} (limit {c['limit']:.1e})")
    lines.append(f"  time {res.timing.get('total', 0.0):.1f} s")
    return lines


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "emit":
            res = load_result(args.result)
            out = args.out or os.path.dirname(os.path.abspath(args.result))
            for p in emit(res, args.format, args.what, out):
                print(p)
            return EXIT_OK
        if args.command == "compare" and len(args.config) != 2:
            raise ValidationError("compare needs --config twice")
        if args.command != "compare" and len(args.config) != 1:
            raise ValidationError("give --config once")
        cfgs = [_apply_overrides(load_config(p), args) for p in args.config]
        res = run_pipeline(cfgs[0], args.command, cfgs[1] if len(cfgs) > 1 else None,
                           jobs=max(1, args.jobs))
        where = persist(res, _out_root(args.out), args.format)
        print("\n".join(_summary(res)))
        print(f"  written to {where}")
        if not res.passed:
            bad = ", ".join(c["name"] for c in res.failed_checks())
            print(f"error: hard invariant failed: {bad}", file=sys.stderr)
            return EXIT_NUMERICAL
        return EXIT_OK
    except ValidationError as exc:
        print(f"error ({exc.invariant}): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error ({exc.invariant}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except WeylSysError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
