"""Command-line front end (``maxslope``)."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ConfigError, MaxSlopeError
from .experiment import (
    EXAMPLES,
    EXIT_REFUSED,
    ExperimentConfig,
    apply_overrides,
    reproduce_example,
    run_experiment,
)
from .io import write_json


def _load(args) -> dict:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    return apply_overrides(data, args.set)


def _report(code: int, summary: dict) -> int:
    status = summary.get("status", "passed" if summary.get("passed") else "failed")
    name = summary.get("name", summary.get("example"))
    print(f"{name}: {status} (exit {code})")
    if "error" in summary:
        print(f"  {summary['error']}")
    for t in summary.get("transforms", []):
        line = f"  p'={t['p_prime']:g}: {t['status']}"
        if "case" in t:
            line += f" case={t['case']}"
        if "error" in t:
            line += f" ({t['error']})"
        print(line)
    for c in summary.get("checks", []):
        print(f"  {'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3g} (tol {c['tolerance']:.3g})")
    return code


def _run_mode(args, mode: str) -> int:
    cfg = ExperimentConfig.from_dict(_load(args))
    return _report(*run_experiment(cfg, args.out, mode, args.tol_scale))


def _sweep_job(job):
    data, out, tol_scale = job
    code, summary = run_experiment(ExperimentConfig.from_dict(data), out, "verify", tol_scale)
    return code, summary


def _sweep(args) -> int:
    base = _load(args)
    if "=" not in args.vary:
        raise ConfigError("--vary expects key=v1,v2,...")
    key, values = args.vary.split("=", 1)
    jobs = []
    for raw in values.split(","):
        data = apply_overrides(base, [f"{key}={raw}"])
        data["name"] = f"{base.get('name', 'experiment')}_{key.replace('.', '_')}_{raw}"
        jobs.append((data, args.out, args.tol_scale))
    raws = values.split(",")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    rows = []
    for raw, (data, _, _), (code, summary) in zip(raws, jobs, results):
        _report(code, summary)
        rows.append({"name": data["name"], "value": raw, "exit_code": code,
                     "checkers": summary.get("checkers", {})})
    write_json(Path(args.out or "out") / "sweep.json", {"vary": key, "runs": rows})
    return max(code for code, _ in results)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxslope", description="Curves of maximal slope and exponent transforms.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--out", default=None, help="output directory (default: config 'output')")
        p.add_argument("--set", action="append", default=[], metavar="K=V", help="override a config key")
        p.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")

    for name, helptext in (
        ("solve", "produce the p-flow and export it"),
        ("transform", "produce the flow and transform it to each p'"),
        ("verify", "run the flow, all enabled checkers and transforms"),
    ):
        common(sub.add_parser(name, help=helptext))
    rep = sub.add_parser("reproduce", help="reproduce a curated example")
    rep.add_argument("name", choices=sorted(EXAMPLES))
    rep.add_argument("--out", default="out")
    rep.add_argument("--tol-scale", type=float, default=1.0)
    sw = sub.add_parser("sweep", help="verify a config over several values of one key")
    common(sw)
    sw.add_argument("--vary", required=True, metavar="K=V1,V2", help="key and comma-separated values")
    sw.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            return _report(*reproduce_example(args.name, args.out, args.tol_scale))
        if args.command == "sweep":
            return _sweep(args)
        return _run_mode(args, args.command)
    except (ConfigError, MaxSlopeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
