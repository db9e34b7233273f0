"""Command line: ``frobcurrents run <scenario>`` and ``frobcurrents list``.

Exit codes: 0 all checks pass, 1 some check failed, 2 invalid scenario, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

from . import __version__
from .scenarios import (
    SCHEMA_VERSION,
    STATEMENTS,
    ScenarioError,
    build_scenario,
    builtin_document,
    builtin_names,
    load_document,
    run_check,
)

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "FROBCURRENTS_THREADS"


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_scenario(source: str, overrides: dict | None = None) -> dict:
    """Run every check of a scenario and return the report (raises ScenarioError)."""
    started = time.perf_counter()
    doc, origin = load_document(source)
    sc = build_scenario(doc, overrides)
    indices = range(len(sc.checks))
    workers = min(_threads(), len(sc.checks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: run_check(sc, i), indices))
    else:
        results = [run_check(sc, i) for i in indices]
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "scenario": sc.name,
        "source": origin,
        "input_digest": sc.digest,
        "settings": dict(sc.settings.__dict__),
        "checks": [r.to_json() for r in results],
        "passed": all(r.passed for r in results),
        "timestamp": {
            "utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "elapsed_seconds": round(time.perf_counter() - started, 3),
            "check_seconds": {r.name: round(r.elapsed, 3) for r in results},
        },
    }


def render_text(report: dict) -> str:
    lines = [f"scenario {report['scenario']} ({report['source']})  digest {report['input_digest'][:12]}"]
    for chk in report["checks"]:
        lines.append(f"  [{chk['status'].upper():5}] {chk['name']}: {_headline(chk)}")
    verdict = "PASS" if report["passed"] else "FAIL"
    lines.append(f"{verdict}: {sum(c['status'] == 'pass' for c in report['checks'])}/{len(report['checks'])} checks")
    return "\n".join(lines)


def _headline(chk: dict) -> str:
    if "error" in chk:
        return chk["error"]
    d = chk["details"]
    kind = chk["type"]
    if kind == "involutivity-scan":
        return f"residual in [{d['min_residual']:.4g}, {d['max_residual']:.4g}] (expect {d['expect']})"
    if kind == "obstruction":
        if "witness" not in d:
            return d.get("error", "")
        return f"witness {d['witness']:.6g} (margin {d['margin']:.3g}), restriction residual {d['restriction_residual']:.2e}"
    if kind == "pairing-chain":
        return f"A={d['A_boundary']:.6g} B={d['B_dphi_alpha']:.3g} C={d['C_phi_dalpha']:.6g} defect {d['defect']:.2e} (est {d['error_estimate']:.2e})"
    if kind == "straighten":
        if "verification" not in d:
            return d.get("error", "")
        return f"pivots {d['pivots']}, tangency residual {d['verification']['tangency_residual']:.2e}"
    if kind == "leaf":
        worst = max(x["boundary_tangency"] for x in d["leaves"])
        return f"{len(d['leaves'])} leaves, boundary tangency <= {worst:.2e}"
    if kind == "foliate":
        return (f"{d['atoms']} atoms, (i) {d['condition_i']['error']:.2e}, (ii) {d['condition_ii']['error']:.2e}, "
                f"(iv) {d['condition_iv'].get('error', d['condition_iv'].get('status'))}")
    if kind == "stokes-check":
        return f"{d['boundary_side']:.10g} vs {d['interior_side']:.10g}"
    if kind == "flow-decompose":
        return f"{d['flows']} flows, {d['total_atoms']} atoms over {d['total_edges']} edges"
    if kind == "coarea":
        last = d["grids"][-1]
        return f"relative error {last['relative_error']:.2e} at {last['samples']}^2, ratios {[round(r, 2) for r in d['refinement_ratios']]}"
    return ""


def cmd_run(args) -> int:
    overrides = {
        "tolerance": args.tol,
        "resolution": args.resolution,
        "order": args.quadrature_order,
        "rational": True if args.rational else None,
        "seed": args.seed,
    }
    try:
        report = run_scenario(args.scenario, overrides)
    except ScenarioError as exc:
        print(f"invalid scenario at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if args.json:
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
        if args.json == "-":
            sys.stdout.write(text)
        else:
            with open(args.json, "w") as fh:
                fh.write(text)
    if args.json != "-":
        print(render_text(report))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_list(args) -> int:
    for name in builtin_names():
        doc = builtin_document(name)
        print(f"{name}: {doc.get('description', '')}")
        if args.verbose:
            print(f"    statement: {doc.get('statement', '')}")
            for chk in doc["checks"]:
                label = chk.get("name", chk["type"])
                print(f"    - {label}: {chk.get('statement', STATEMENTS[chk['type']])}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frobcurrents", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a built-in scenario or a scenario JSON file")
    run.add_argument("scenario", help="built-in name (see `list`) or path to a scenario file")
    run.add_argument("--tol", type=float, help="involutivity tolerance")
    run.add_argument("--resolution", type=int, help="default scan and grid resolution")
    run.add_argument("--quadrature-order", type=int, choices=(1, 2), help="quadrature order for pairings")
    run.add_argument("--rational", action="store_true", help="exact rational arithmetic for flow checks")
    run.add_argument("--seed", type=int, help="seed for randomized checks")
    run.add_argument("--json", metavar="OUT", help="write the JSON report to OUT ('-' for stdout)")
    run.set_defaults(func=cmd_run)
    lst = sub.add_parser("list", help="list built-in scenarios")
    lst.add_argument("-v", "--verbose", action="store_true", help="show the statement behind each check")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
