"""Run the certify driver on every problem fixture and print a summary table.

    python3 scripts/run_examples.py [--json results.json]
"""
import argparse
import json
import time
from pathlib import Path

from momentcert.certify import certify_moment
from momentcert.cli import parse_problem, resolve_options, stats_json

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def run(path: Path) -> dict:
    prob = parse_problem(json.loads(path.read_text()), path.name)
    sched, opts = resolve_options(prob, None)
    t0 = time.perf_counter()
    v = certify_moment(prob.n, prob.d, prob.y, prob.g, sched, opts)
    row = {"fixture": path.stem, "verdict": v.kind, "D_used": v.D_used, "schedule": sched,
           "seconds": round(time.perf_counter() - t0, 3), **stats_json(prob)}
    if v.rational_certificate is not None:
        row["p"] = str(v.rational_certificate.p)
    if v.measure is not None:
        row["atoms"] = v.measure.s
        row["residual"] = v.measure.verified_residual
    row["sdp"] = [(dg["D"], dg["status"]) for dg in v.diagnostics]
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args()
    rows = [run(p) for p in sorted(FIXTURES.glob("*.json")) if "certificate" not in p.stem]
    print(f"{'fixture':34s} {'verdict':16s} {'D_used':>6s} {'N':>4s} {'tau':>5s} {'sec':>7s}")
    for r in rows:
        print(f"{r['fixture']:34s} {r['verdict']:16s} {str(r['D_used']):>6s} {r['N']:4d} "
              f"{r['tau']:5d} {r['seconds']:7.3f}")
        print(f"    sdp: {r['sdp']}")
        if "p" in r:
            print(f"    p = {r['p']}")
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=2, default=str) + "\n")


if __name__ == "__main__":
    main()
