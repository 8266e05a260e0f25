"""Margin of the certificate SDP as the truncation degree D grows.

For y = (1, 0, 0, 0, 1) the unconstrained problem stays infeasible at
every D, while on [-1, 1] described by (1 - x, 1 + x) a certificate
appears once sigma_1 (1 - x) may reach degree 4 (D >= 5).

    python3 scripts/degree_escalation.py [--max-degree 12]
"""
import argparse

from momentcert.certify import NotFoundAtDegree, find_certificate
from momentcert.polycore import MomentVector, Polynomial, SemialgebraicDescription

Y = MomentVector(1, 4, (1, 0, 0, 0, 1))
CASES = {
    "unconstrained": SemialgebraicDescription(1, ()),
    "interval (1-x, 1+x)": SemialgebraicDescription(1, (Polynomial(1, {(0,): 1, (1,): -1}),
                                                        Polynomial(1, {(0,): 1, (1,): 1}))),
    "interval (1-x^2)": SemialgebraicDescription(1, (Polynomial(1, {(0,): 1, (2,): -1}),)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--max-degree", type=int, default=12)
    args = ap.parse_args()
    for name, g in CASES.items():
        print(name)
        for D in range(4, args.max_degree + 1):
            res = find_certificate(1, 4, Y, g, D)
            if isinstance(res, NotFoundAtDegree):
                wb = res.witness.bound if res.witness is not None else float("nan")
                print(f"  D={D:2d}  {res.status.value:16s} margin={res.margin:+.6f} witness={wb:+.6f}")
            else:
                print(f"  D={D:2d}  {'StrictlyFeasible':16s} margin={res.margin:+.6f} p={res.p.to_float()}")


if __name__ == "__main__":
    main()
