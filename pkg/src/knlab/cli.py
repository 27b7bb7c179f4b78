"""Command-line front end: ``knlab run|list|delta-table|kn``.

Exit status: 0 when every verdict is PASS, 1 when some verdict fails, 2 for
an invalid configuration, 3 when a numerical or focal error aborts a cell.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__, experiments
from .config import RunConfig, _json_safe, load
from .errors import ConfigError, KnlabError

log = logging.getLogger("knlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass
class Context:
    specs: dict
    seed: int
    scale: float
    jobs: int

    def family(self, name):
        return self.specs[name]


def _slug(s):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in s) or "all"


def write_report(rep, out, index):
    stem = f"{index:02d}-{rep.experiment}" + (f"-{_slug(rep.family)}" if rep.family else "")
    (out / f"{stem}.csv").write_text(rep.ledger_csv(), encoding="utf-8", newline="")
    (out / f"{stem}.json").write_text(json.dumps(rep.verdict_dict(), indent=2, sort_keys=True)
                                      + "\n", encoding="utf-8")
    return stem


def run(cfg: RunConfig, *, out=None):
    """Execute every configured experiment; returns the exit status."""
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    ctx = Context(cfg.family_specs(), cfg.seed, cfg.resolution_scale, cfg.jobs)
    manifest = {"tool": "knlab", "version": __version__, "config_hash": cfg.config_hash(),
                "config": _json_safe(cfg.canonical()), "experiments": [], "status": None}
    status = EXIT_OK
    t_start = time.perf_counter()
    for i, exp in enumerate(cfg.experiments):
        params = cfg.resolved(exp)
        name = params.pop("name")
        t0 = time.perf_counter()
        try:
            rep = experiments.EXPERIMENTS[name].runner(params, ctx)
        except KnlabError as exc:
            cell = {"index": i, "experiment": name, "params": _json_safe(params),
                    "error": type(exc).__name__, "message": str(exc),
                    "diagnostics": _json_safe(getattr(exc, "diagnostics", {}))}
            (out / "FAILED").write_text(json.dumps(cell, indent=2, default=str) + "\n")
            log.error("%s failed: %s: %s", name, type(exc).__name__, exc)
            manifest["experiments"].append({"name": name, "error": cell["error"],
                                            "seconds": time.perf_counter() - t0})
            status = EXIT_NUMERICAL
            break
        stem = write_report(rep, out, i)
        dt = time.perf_counter() - t0
        log.info("%-22s %-40s %s  (%.1f s)", name, rep.family, rep.verdict, dt)
        print(f"{rep.verdict}  {name}  {rep.family}", flush=True)
        manifest["experiments"].append({"name": name, "family": rep.family, "file": stem,
                                        "verdict": rep.verdict, "seconds": dt})
        if not rep.passed:
            status = EXIT_FAIL
    manifest["total_seconds"] = time.perf_counter() - t_start
    manifest["status"] = status
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return status


def list_experiments():
    lines = []
    for name in sorted(experiments.EXPERIMENTS):
        d = experiments.EXPERIMENTS[name]
        params = ", ".join(f"{k}={_show(v)}" for k, v in d.schema.items())
        lines.append(f"{name}: {d.summary}\n    {params}")
    return "\n".join(lines)


def _show(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, list) and len(v) > 6:
        return f"[{v[0]}, ..., {v[-1]}] ({len(v)})"
    return repr(v)


def delta_table_csv(ps=(2, 3, 4, 6, 8, math.inf)):
    rows = [("p", "delta", "exact")]
    for p in ps:
        rows.append(("inf" if math.isinf(p) else repr(p), repr(experiments.delta(p)),
                     str(experiments.delta_exact(p))))
    s = io.StringIO()
    csv.writer(s, lineterminator="\n").writerows(rows)
    return s.getvalue()


def kn_command(family, k, seed, scale):
    spec = experiments.FamilySpec(family, seeds=(seed,) if family == "random_harmonic" else ())
    member = spec.members()[0]
    f = member.field(k)
    res = experiments.kn(f, spec.default_sampler, scale)
    return {"family": member.label, "k": k, "lambda": f.eigenvalue, "kn": res.value,
            "kn_normalized": res.normalized, "maximizer_base": [float(c) for c in res.base],
            "maximizer_angle": float(res.angle), "radius": res.radius,
            "candidates": res.trace["candidate_count"]}


def _common(defaults):
    p = argparse.ArgumentParser(add_help=False)
    d = None if defaults else argparse.SUPPRESS
    p.add_argument("--jobs", type=int, default=d, help="worker threads per experiment")
    p.add_argument("--out", default=d, help="output directory (KNLAB_OUT overrides)")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--resolution-scale", type=float, default=d)
    p.add_argument("-v", "--verbose", action="store_true", default=False if defaults else d)
    return p


def build_parser():
    """Global flags are accepted before or after the subcommand."""
    ap = argparse.ArgumentParser(prog="knlab", description=__doc__.splitlines()[0],
                                 parents=[_common(True)])
    common = _common(False)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configuration file", parents=[common])
    r.add_argument("config")
    sub.add_parser("list", help="list registered experiments", parents=[common])
    sub.add_parser("delta-table", help="print delta(p) as CSV", parents=[common])
    k = sub.add_parser("kn", help="Kakeya-Nikodym maximal average of one field",
                       parents=[common])
    k.add_argument("family", choices=["zonal", "highest_weight", "torus_wave", "random_harmonic"])
    k.add_argument("k", type=int)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = os.environ.get("KNLAB_OUT") or args.out
    if args.command == "list":
        print(list_experiments())
        return EXIT_OK
    if args.command == "delta-table":
        text = delta_table_csv()
        sys.stdout.write(text)
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "delta-table.csv").write_text(text, encoding="utf-8", newline="")
        return EXIT_OK
    if args.command == "kn":
        try:
            res = kn_command(args.family, args.k, 0 if args.seed is None else args.seed,
                             args.resolution_scale or 1.0)
        except (ValueError, KnlabError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG if isinstance(exc, ValueError) else EXIT_NUMERICAL
        print(json.dumps(res, indent=2))
        return EXIT_OK
    try:
        cfg = load(args.config)
    except ConfigError as exc:
        where = f"line {exc.line}" if exc.line else "config"
        print(f"{args.config}:{where}: {exc}" + (f" [key: {exc.key}]" if exc.key else ""),
              file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = cfg.with_overrides(seed=args.seed, resolution_scale=args.resolution_scale,
                             output=out, jobs=args.jobs)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
