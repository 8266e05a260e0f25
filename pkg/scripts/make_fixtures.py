"""Write the JSON problem and verdict fixtures used by the tests and README."""
import json
from fractions import Fraction
from pathlib import Path

from momentcert.cli import exponent_key, rational_str
from momentcert.qmodule import QuadraticModuleTruncation
from momentcert.polycore import Polynomial, SemialgebraicDescription

OUT = Path(__file__).resolve().parent.parent / "fixtures"

BALL2 = {"[0,0]": "1", "[2,0]": "-1", "[0,2]": "-1"}
Y38 = {"[0,0]": 32, "[2,0]": 34, "[0,2]": 34, "[4,0]": 43, "[0,4]": 43, "[2,2]": 30,
       "[6,0]": 128, "[0,6]": 128, "[4,2]": 28, "[2,4]": 28}

PROBLEMS = {
    "example_3_6.json": {"n": 1, "d": 2, "y": ["1", "1", "0"], "g": [], "options": {"schedule": [2]}},
    "uniform_interval_d4.json": {"n": 1, "d": 4, "y": ["2", "0", "2/3", "0", "2/5"],
                                 "g": [{"[0]": "1", "[2]": "-1"}], "options": {"schedule": [4, 6]}},
    "example_2_2_unconstrained.json": {"n": 1, "d": 4, "y": ["1", "0", "0", "0", "1"], "g": [],
                                       "options": {"schedule": [4, 6, 8, 10, 12]}},
    "example_3_7_interval.json": {"n": 1, "d": 4, "y": ["1", "0", "0", "0", "1"],
                                  "g": [{"[0]": "1", "[1]": "-1"}, {"[0]": "1", "[1]": "1"}]},
    "example_3_8_ball.json": {"n": 2, "d": 6, "y": Y38, "g": [BALL2], "options": {"schedule": [6]}},
    "dirac_ball_d4.json": {"n": 2, "d": 4, "g": [BALL2],
                           "y": {exponent_key((a, b)): rational_str(Fraction(1, 2) ** a * Fraction(-1, 3) ** b)
                                 for a in range(5) for b in range(5 - a)}},
}


def _gram_json(X):
    return [[rational_str(v) for v in row] for row in X]


def known_certificates():
    # p = 2 - 2x + x^2 = 1 + (1 - x)^2
    c36 = {"verdict": "unrepresentable", "problem": {k: v for k, v in PROBLEMS["example_3_6.json"].items()
                                                     if k != "options"},
           "certificate": {"p": {"[0]": "2", "[1]": "-2", "[2]": "1"},
                           "grams": [[["1", "-1"], ["-1", "1"]]], "D_used": 2, "exact": True, "margin": 0}}
    # p = 1 + (8/9)(1 - x1^2 - x2^2): sigma_0 = 0, sigma_1 = 8/9
    ball = SemialgebraicDescription(2, (Polynomial(2, {(0, 0): 1, (2, 0): -1, (0, 2): -1}),))
    sides = QuadraticModuleTruncation(ball, 6).gram_sides
    grams = [[[Fraction(0)] * s for _ in range(s)] for s in sides]
    grams[1][0][0] = Fraction(8, 9)
    p = {"[0,0]": "17/9", "[2,0]": "-8/9", "[0,2]": "-8/9"}
    c43 = {"verdict": "unrepresentable",
           "problem": {k: v for k, v in PROBLEMS["example_3_8_ball.json"].items() if k != "options"},
           "certificate": {"p": p, "grams": [_gram_json(X) for X in grams], "D_used": 6,
                           "exact": True, "margin": 0}}
    return {"example_3_6_known_certificate.json": c36, "example_3_8_known_certificate.json": c43}


def main():
    OUT.mkdir(exist_ok=True)
    for name, obj in {**PROBLEMS, **known_certificates()}.items():
        (OUT / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        print("wrote", OUT / name)


if __name__ == "__main__":
    main()
