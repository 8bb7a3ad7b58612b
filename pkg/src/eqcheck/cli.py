"""Command-line front end: ``eqcheck check FILE`` and ``eqcheck bench DIR``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .engine import Options, check_equiv
from .parser import ParseError, parse_header, parse_program_pair
from .typing import TypeCheckError, TypeMismatchBetweenSides

EXIT_CODES = {"eq": 0, "ineq": 1, "inconclusive": 2}
VERDICT_NAMES = {"eq": "equivalent", "ineq": "inequivalent", "inconclusive": "inconclusive"}

BENCH_CONFIGS = [
    ("default", {}),
    ("no-sep", {"separation": False}),
    ("no-annot", {"annotations": False}),
    ("no-reentry", {"reentry": False}),
    ("no-upto", {"all_upto": False}),
]

TIMING_FIELDS = ("seconds", "elapsed")


def _model_json(model: dict) -> dict:
    return {f"_k#{k}": v for k, v in sorted(model.items())}


def verdict_json(v) -> dict:
    out = {"verdict": VERDICT_NAMES[v.kind]}
    if v.kind == "ineq":
        out["trace"] = v.witness.lines()
        out["sides"] = [s.side for s in v.witness.steps]
        out["survivor"] = v.witness.survivor
        out["model"] = _model_json(v.model)
    if v.kind == "inconclusive":
        out["reasons"] = sorted(v.reasons)
    out["stats"] = v.stats.as_dict() if v.stats is not None else {}
    return out


def load(path) -> tuple:
    text = Path(path).read_text(encoding="utf-8")
    header = parse_header(text)
    pair = parse_program_pair(text, names=(f"{path} (left)", f"{path} (right)"))
    return pair, header


def options_for(header: dict, base: Options, bound_given: bool) -> Options:
    opts = base
    if not bound_given and "bound" in header:
        opts = replace(opts, bound=int(header["bound"]))
    if "fuel" in header:
        opts = replace(opts, fuel=int(header["fuel"]))
    return opts


def run_file(path, opts: Options, bound_given=False, log=None) -> dict:
    """Check one file; returns a JSON-ready record (never raises on bad input)."""
    try:
        pair, header = load(path)
    except (OSError, ParseError, TypeCheckError, TypeMismatchBetweenSides) as exc:
        return {"file": str(path), "verdict": "error", "error": str(exc)}
    opts = options_for(header, opts, bound_given)
    v = check_equiv(pair, opts, log=log)
    rec = {"file": str(path), "expected": header.get("expect"), "bound": opts.bound}
    rec.update(verdict_json(v))
    return rec


def _print_report(rec: dict, out):
    if rec["verdict"] == "error":
        print(f"error: {rec['error']}", file=out)
        return
    print(f"verdict: {rec['verdict']}", file=out)
    if rec["verdict"] == "inequivalent":
        print(f"witness ({rec['survivor']} program completes, the other cannot):", file=out)
        for line in rec["trace"]:
            print(f"  {line}", file=out)
        if rec["model"]:
            print("model: " + ", ".join(f"{k}={v}" for k, v in rec["model"].items()), file=out)
    if rec["verdict"] == "inconclusive":
        print("reasons: " + ", ".join(rec["reasons"]), file=out)
    st = rec["stats"]
    print(
        f"stats: nodes={st['nodes']} memo_hits={st['memo_hits']} "
        f"solver_queries={st['solver_queries']} max_depth={st['max_depth']} "
        f"bound={rec['bound']} time={st['elapsed']:.2f}s",
        file=out,
    )


def cmd_check(args) -> int:
    opts = _options(args)
    log = (lambda line: print(line, file=sys.stderr)) if args.explain else None
    rec = run_file(args.file, opts, bound_given=args.bound is not None, log=log)
    if args.json:
        print(json.dumps(rec, sort_keys=True))
    else:
        _print_report(rec, sys.stdout)
    if rec["verdict"] == "error":
        return 3
    return {"equivalent": 0, "inequivalent": 1, "inconclusive": 2}[rec["verdict"]]


def corpus_files(root) -> list:
    return sorted(p for p in Path(root).rglob("*.prog") if p.is_file())


def _job(item):
    path, opts, bound_given = item
    return run_file(path, opts, bound_given)


def false_verdict(rec: dict) -> bool:
    exp, got = rec.get("expected"), rec["verdict"]
    return (exp == "eq" and got == "inequivalent") or (exp == "ineq" and got == "equivalent")


def bench(root, base: Options, jobs: int = 1, bound_given=False, configs=BENCH_CONFIGS) -> dict:
    files = corpus_files(root)
    report = {"corpus": str(root), "configs": [], "false_verdicts": []}
    for name, toggles in configs:
        opts = replace(base, **toggles)
        items = [(f, opts, bound_given) for f in files]
        start = time.monotonic()
        if jobs > 1 and len(items) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                recs = list(pool.map(_job, items))
        else:
            recs = [_job(it) for it in items]
        seconds = time.monotonic() - start
        for r in recs:
            r["file"] = str(Path(r["file"]).relative_to(root))
        entry = {
            "name": name,
            "eq_proved": sum(r["verdict"] == "equivalent" for r in recs),
            "ineq_found": sum(r["verdict"] == "inequivalent" for r in recs),
            "inconclusive": sum(r["verdict"] == "inconclusive" for r in recs),
            "errors": sum(r["verdict"] == "error" for r in recs),
            "seconds": round(seconds, 3),
            "files": recs,
        }
        report["configs"].append(entry)
        for r in recs:
            if false_verdict(r):
                report["false_verdicts"].append({"config": name, "file": r["file"], "verdict": r["verdict"]})
    return report


def bench_table(report: dict) -> str:
    width = max([len(c["name"]) for c in report["configs"]] + [6])
    lines = [f"{'config':<{width}}  eq | ineq [time]"]
    for c in report["configs"]:
        lines.append(f"{c['name']:<{width}}  {c['eq_proved']} | {c['ineq_found']} [{c['seconds']:.1f}s]")
    return "\n".join(lines)


def strip_timing(obj):
    """Drop wall-clock fields, for comparing reports across runs."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_FIELDS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def cmd_bench(args) -> int:
    opts = _options(args)
    report = bench(Path(args.dir), opts, jobs=args.jobs, bound_given=args.bound is not None)
    if args.json:
        print(json.dumps(report, sort_keys=True, indent=1))
    else:
        print(bench_table(report))
        for fv in report["false_verdicts"]:
            print(f"FALSE VERDICT [{fv['config']}] {fv['file']}: {fv['verdict']}")
    return 1 if report["false_verdicts"] else 0


def _options(args) -> Options:
    return Options(
        bound=args.bound if args.bound is not None else 6,
        timeout=args.timeout,
        separation=not args.no_sep,
        annotations=not args.no_annot,
        reentry=not args.no_reentry,
        all_upto=not args.no_upto,
        solver_cmd=args.solver,
        explain=args.explain,
        json=args.json,
    )


def _common(p):
    p.add_argument("--bound", type=int, default=None, help="function calls per path (default 6, or the file header)")
    p.add_argument("--timeout", type=float, default=150.0, help="seconds per file (default 150)")
    p.add_argument("--no-sep", action="store_true", help="disable up to separation")
    p.add_argument("--no-annot", action="store_true", help="ignore annotations (also disables re-entry)")
    p.add_argument("--no-reentry", action="store_true", help="disable up to re-entry")
    p.add_argument("--no-upto", action="store_true", help="disable every up-to technique")
    p.add_argument("--solver", default="z3 -in", help="SMT-LIB solver command (default 'z3 -in')")
    p.add_argument("--explain", action="store_true", help="print technique applications to stderr")
    p.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eqcheck", description="Bounded contextual equivalence checker.")
    sub = ap.add_subparsers(dest="command", required=True)
    pc = sub.add_parser("check", help="check one program pair")
    pc.add_argument("file")
    _common(pc)
    pc.set_defaults(func=cmd_check)
    pb = sub.add_parser("bench", help="run a corpus under the five configurations")
    pb.add_argument("dir")
    pb.add_argument("--jobs", type=int, default=1)
    _common(pb)
    pb.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 3 if exc.code else 0
    try:
        return args.func(args)
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
