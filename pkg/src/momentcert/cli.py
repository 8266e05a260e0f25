"""Command-line front end.

Problem files are JSON with exact data::

    {"n": 1, "d": 2, "y": ["1", "1", "0"], "g": [{"[0]": "1", "[2]": "-1"}],
     "options": {"schedule": [2, 4]}}

y is either a list in graded-lex order or a map from exponent strings
"[a1,...,an]" to values (missing entries are 0). Values in y and g are JSON
integers or strings such as "3/7"; float literals are rejected so that no
binary rounding sneaks into the data. Exit codes: 0 representable,
1 unrepresentable, 2 undetermined, 3 input error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import sdp
from .certify import (CertifyOptions, InvalidDegree, NotFoundAtDegree, ZeroMassViolation,
                      _rationalize, certify_moment, default_schedule, find_certificate)
from .exact import project_and_verify, RoundingFailed, verify_certificate
from .measure import AtomicMeasure, exact_residual, find_measure, psd_prescreen
from .polycore import (MomentVector, MonomialBasis, Polynomial, SemialgebraicDescription,
                       input_stats)
from .qmodule import Certificate

log = logging.getLogger(__name__)

EXIT_REPRESENTABLE = 0
EXIT_UNREPRESENTABLE = 1
EXIT_UNDETERMINED = 2
EXIT_INPUT_ERROR = 3

VERDICT_EXIT = {"representable": EXIT_REPRESENTABLE, "unrepresentable": EXIT_UNREPRESENTABLE,
                "undetermined": EXIT_UNDETERMINED}


class InputError(ValueError):
    pass


class _FloatLiteral(str):
    """Marks numbers written with a decimal point or exponent in the JSON."""


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        return json.loads(text, parse_float=_FloatLiteral)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc


def parse_rational(v, where: str) -> Fraction:
    if isinstance(v, bool):
        raise InputError(f"{where}: expected a rational, got a boolean")
    if isinstance(v, _FloatLiteral):
        raise InputError(f"{where}: float literal {v} is not allowed; write it as a string such as \"1/3\"")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"{where}: cannot parse {v!r} as a rational") from exc
    raise InputError(f"{where}: expected an integer or a rational string, got {type(v).__name__}")


def parse_exponent(key: str, n: int, where: str) -> tuple:
    try:
        e = json.loads(key)
    except json.JSONDecodeError as exc:
        raise InputError(f"{where}: exponent key {key!r} is not of the form \"[a1,...,an]\"") from exc
    if (not isinstance(e, list) or len(e) != n
            or not all(isinstance(a, int) and not isinstance(a, bool) and a >= 0 for a in e)):
        raise InputError(f"{where}: exponent key {key!r} must list {n} nonnegative integers")
    return tuple(e)


def exponent_key(e) -> str:
    return "[" + ",".join(str(a) for a in e) + "]"


def rational_str(q) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _parse_int(v, where, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise InputError(f"{where}: expected an integer")
    if lo is not None and v < lo:
        raise InputError(f"{where}: must be >= {lo}")
    return v


def _parse_poly(obj, n: int, where: str) -> Polynomial:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: a polynomial is a map from exponent strings to rationals")
    coeffs = {}
    for key, v in obj.items():
        e = parse_exponent(key, n, f"{where}[{key!r}]")
        coeffs[e] = coeffs.get(e, 0) + parse_rational(v, f"{where}[{key!r}]")
    return Polynomial(n, coeffs)


def _poly_json(p: Polynomial) -> dict:
    basis_key = lambda e: (sum(e), tuple(-a for a in e))
    return {exponent_key(e): rational_str(c) for e, c in sorted(p.items(), key=lambda t: basis_key(t[0]))}


@dataclass
class Problem:
    n: int
    d: int
    y: MomentVector
    g: SemialgebraicDescription
    options: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"n": self.n, "d": self.d, "y": [rational_str(v) for v in self.y.values],
                "g": [_poly_json(gi) for gi in self.g.g]}


def parse_problem(obj, where: str = "problem") -> Problem:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: top level must be a JSON object")
    for key in ("n", "d", "y"):
        if key not in obj:
            raise InputError(f"{where}: missing key {key!r}")
    n = _parse_int(obj["n"], f"{where}.n", lo=1)
    d = _parse_int(obj["d"], f"{where}.d", lo=0)
    basis = MonomialBasis(n, d)
    raw = obj["y"]
    if isinstance(raw, list):
        if len(raw) != len(basis):
            raise InputError(f"{where}.y: expected {len(basis)} entries for n={n}, d={d}, got {len(raw)}")
        vals = [parse_rational(v, f"{where}.y[{i}]") for i, v in enumerate(raw)]
    elif isinstance(raw, dict):
        vals = [Fraction(0)] * len(basis)
        for key, v in raw.items():
            e = parse_exponent(key, n, f"{where}.y[{key!r}]")
            if sum(e) > d:
                raise InputError(f"{where}.y[{key!r}]: exponent has degree {sum(e)} > d = {d}")
            vals[basis.index_of(e)] = parse_rational(v, f"{where}.y[{key!r}]")
    else:
        raise InputError(f"{where}.y: expected a list or an exponent map")
    gs = obj.get("g", [])
    if not isinstance(gs, list):
        raise InputError(f"{where}.g: expected a list of polynomials")
    g = tuple(_parse_poly(gi, n, f"{where}.g[{i}]") for i, gi in enumerate(gs))
    options = obj.get("options", {})
    if not isinstance(options, dict):
        raise InputError(f"{where}.options: expected an object")
    return Problem(n, d, MomentVector(n, d, tuple(vals)), SemialgebraicDescription(n, g), options)


def _opt_float(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise InputError(f"{where}: expected a number")
    try:
        return float(v)
    except ValueError as exc:
        raise InputError(f"{where}: expected a number") from exc


def _den_schedule(max_den: int) -> tuple:
    sched = [10 ** k for k in (2, 4, 6, 8) if 10 ** k < max_den]
    return tuple(sched + [max_den])


def resolve_options(problem: Problem, args) -> tuple:
    """Merge file options with command-line flags (flags win)."""
    o = problem.options
    opts = CertifyOptions()
    sched = None
    if "schedule" in o:
        if not isinstance(o["schedule"], list):
            raise InputError("options.schedule: expected a list of degrees")
        sched = [_parse_int(D, f"options.schedule[{i}]", lo=0) for i, D in enumerate(o["schedule"])]
    floats = {"tol": "measure_tol", "tol_geo": "tol_geo", "sdp_tol": "tol",
              "margin_threshold": "margin_threshold", "trace_bound": "trace_bound"}
    for key, attr in floats.items():
        if key in o:
            opts = replace(opts, **{attr: _opt_float(o[key], f"options.{key}")})
    ints = {"budget": "budget", "seed": "seed", "threads": "threads", "max_atoms": "max_atoms",
            "max_iter": "max_iter"}
    for key, attr in ints.items():
        if key in o:
            opts = replace(opts, **{attr: _parse_int(o[key], f"options.{key}", lo=0)})
    if "max_den" in o:
        opts = replace(opts, max_den_schedule=_den_schedule(_parse_int(o["max_den"], "options.max_den", lo=1)))
    if "exact" in o:
        if not isinstance(o["exact"], bool):
            raise InputError("options.exact: expected true or false")
        opts = replace(opts, exact=o["exact"])

    if getattr(args, "schedule", None):
        try:
            sched = [int(s) for s in args.schedule.split(",") if s.strip()]
        except ValueError as exc:
            raise InputError(f"--schedule: expected comma-separated integers, got {args.schedule!r}") from exc
    if getattr(args, "tol", None) is not None:
        opts = replace(opts, measure_tol=args.tol)
    if getattr(args, "budget", None) is not None:
        opts = replace(opts, budget=args.budget)
    if getattr(args, "threads", None) is not None:
        opts = replace(opts, threads=args.threads)
    if getattr(args, "seed", None) is not None:
        opts = replace(opts, seed=args.seed)
    if getattr(args, "max_den", None) is not None:
        opts = replace(opts, max_den_schedule=_den_schedule(args.max_den))
    if getattr(args, "no_exact", False):
        opts = replace(opts, exact=False)
    if sched is None:
        sched = default_schedule(problem.n, problem.d, getattr(args, "max_degree", None))
    if not sched:
        raise InputError("schedule must not be empty")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise InputError(f"schedule must be increasing, got {sched}")
    if sched[0] < problem.d:
        raise InputError(f"schedule starts at D = {sched[0]} below d = {problem.d}")
    if not (opts.measure_tol > 0 and opts.tol_geo > 0 and opts.tol > 0):
        raise InputError("tolerances must be positive")
    return sched, opts


# -- serialization of results ------------------------------------------------

def _num(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def certificate_json(cert, exact: bool, margin=None) -> dict:
    if exact:
        grams = [[[rational_str(v) for v in row] for row in X] for X in cert.grams]
        p = _poly_json(cert.p)
    else:
        grams = [[[float(v) for v in row] for row in np.asarray(X, float)] for X in cert.grams]
        p = {exponent_key(e): float(c) for e, c in cert.p.items()}
    out = {"p": p, "grams": grams, "D_used": cert.D, "exact": exact,
           "margin": _num(margin if margin is not None else cert.margin)}
    return out


def measure_json(m: AtomicMeasure) -> dict:
    return {"atoms": [[float(v) for v in u] for u in m.points],
            "weights": [float(c) for c in m.weights],
            "residual": _num(m.residual),
            "verified_residual": _num(m.verified_residual) if m.verified_residual is not None else None,
            "feasibility_slack": _num(m.feasibility_slack)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, Fraction):
        return rational_str(obj)
    return obj


def stats_json(problem: Problem) -> dict:
    st = input_stats(problem.y, problem.g, problem.d)
    return {"N": st.N, "tau_y": st.tau_y, "tau_g": st.tau_g, "tau": st.tau,
            "delta": st.delta, "d_g": st.d_g}


def _write(obj: dict, out) -> None:
    obj = dict(obj)
    obj["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _warn_archimedean(problem: Problem) -> list:
    if problem.g.has_ball_constraint():
        return []
    msg = ("no constraint of the form R - sum x_i^2 found; the certificate/measure dichotomy "
           "is only guaranteed for archimedean descriptions")
    print(f"warning: {msg}", file=sys.stderr)
    return [msg]


# -- subcommands ---------------------------------------------------------------

def cmd_certify(args) -> int:
    problem = parse_problem(_load_json(args.problem), str(args.problem))
    schedule, opts = resolve_options(problem, args)
    warnings = _warn_archimedean(problem)
    verdict = certify_moment(problem.n, problem.d, problem.y, problem.g, schedule, opts)
    diag = {"sdp": verdict.diagnostics, "stats": stats_json(problem), "schedule": schedule,
            "warnings": warnings, "prescreen": None}
    out = {"verdict": verdict.kind, "problem": problem.to_json()}
    if verdict.kind == "unrepresentable":
        if verdict.rational_certificate is not None:
            out["certificate"] = certificate_json(verdict.rational_certificate, True,
                                                  verdict.certificate.margin)
        else:
            out["certificate"] = certificate_json(verdict.certificate, False)
    if verdict.kind == "representable":
        out["measure"] = measure_json(verdict.measure)
    if verdict.unverified_certificate is not None:
        diag["unverified_certificate"] = certificate_json(verdict.unverified_certificate, False)
    rep = verdict.measure_report
    if rep is not None:
        diag["prescreen"] = rep.prescreen
        diag["measure_search"] = {"reason": rep.reason, "restarts": rep.restarts,
                                  "best_residual": {str(k): v for k, v in rep.best_residual.items()}}
    if verdict.kind != "unrepresentable" and diag["prescreen"] is None:
        diag["prescreen"] = psd_prescreen(problem.y, problem.g, problem.d)
    out["diagnostics"] = diag
    _write(out, args.out)
    return VERDICT_EXIT[verdict.kind]


def cmd_find_certificate(args) -> int:
    problem = parse_problem(_load_json(args.problem), str(args.problem))
    schedule, opts = resolve_options(problem, args)
    if args.degree is not None:
        schedule = [args.degree]
    _warn_archimedean(problem)
    diags = []
    out = {"verdict": "undetermined", "problem": problem.to_json()}
    for D in schedule:
        try:
            res = find_certificate(problem.n, problem.d, problem.y, problem.g, D, tol=opts.tol,
                                   trace_bound=opts.trace_bound,
                                   margin_threshold=opts.margin_threshold, max_iter=opts.max_iter)
        except sdp.NumericalFailure as exc:
            diags.append({"D": D, "status": sdp.Status.NUMERICAL_FAILURE.value, "note": str(exc)})
            continue
        if isinstance(res, NotFoundAtDegree):
            entry = {"D": D, "status": res.status.value, "margin": res.margin,
                     "boundary_suspect": res.boundary_suspect}
            if res.witness is not None:
                entry["witness_bound"] = res.witness.bound
            diags.append(entry)
            continue
        diags.append({"D": D, "status": sdp.Status.STRICTLY_FEASIBLE.value, "margin": res.margin})
        if not opts.exact:
            out["verdict"] = "unrepresentable"
            out["certificate"] = certificate_json(res, False)
            break
        rational, _ = _rationalize(res, problem.y, problem.g, opts)
        if rational is not None:
            out["verdict"] = "unrepresentable"
            out["certificate"] = certificate_json(rational, True, res.margin)
            break
        out.setdefault("diagnostics", {})["unverified_certificate"] = certificate_json(res, False)
    out.setdefault("diagnostics", {}).update({"sdp": diags, "stats": stats_json(problem)})
    _write(out, args.out)
    return VERDICT_EXIT[out["verdict"]]


def cmd_find_measure(args) -> int:
    problem = parse_problem(_load_json(args.problem), str(args.problem))
    _, opts = resolve_options(problem, args)
    res = find_measure(problem.n, problem.d, problem.y, problem.g, tol=opts.measure_tol,
                       tol_geo=opts.tol_geo, budget=opts.budget, max_atoms=opts.max_atoms,
                       seed=opts.seed)
    out = {"problem": problem.to_json(), "diagnostics": {"stats": stats_json(problem)}}
    if isinstance(res, AtomicMeasure):
        out["verdict"] = "representable"
        out["measure"] = measure_json(res)
        out["diagnostics"]["prescreen"] = psd_prescreen(problem.y, problem.g, problem.d)
    else:
        out["verdict"] = "undetermined"
        out["diagnostics"].update({"prescreen": res.prescreen, "measure_search": {
            "reason": res.reason, "restarts": res.restarts,
            "best_residual": {str(k): v for k, v in res.best_residual.items()}}})
    _write(out, args.out)
    return VERDICT_EXIT[out["verdict"]]


@dataclass
class _FileCertificate:
    p: Polynomial
    grams: list
    D: int
    g: SemialgebraicDescription


def _certificate_from_json(obj, problem: Problem, where: str):
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected an object")
    D = _parse_int(obj.get("D_used"), f"{where}.D_used", lo=0)
    exact = obj.get("exact", False)
    p_raw = obj.get("p", {})
    grams_raw = obj.get("grams")
    if not isinstance(grams_raw, list):
        raise InputError(f"{where}.grams: expected a list of matrices")
    if exact:
        p = _parse_poly(p_raw, problem.n, f"{where}.p")
        grams = [[[parse_rational(v, f"{where}.grams[{b}][{i}][{j}]") for j, v in enumerate(row)]
                  for i, row in enumerate(X)] for b, X in enumerate(grams_raw)]
        return _FileCertificate(p, grams, D, problem.g), True
    p = Polynomial(problem.n, {parse_exponent(k, problem.n, f"{where}.p"): _opt_float(v, f"{where}.p")
                               for k, v in p_raw.items()})
    grams = [np.array([[_opt_float(v, f"{where}.grams") for v in row] for row in X], float).reshape(
        len(X), len(X)) for X in grams_raw]
    margin = obj.get("margin")
    margin = _opt_float(margin, f"{where}.margin") if margin is not None else 0.0
    return Certificate(p=p, grams=grams, D=D, margin=margin, g=problem.g), False


def verify_verdict(obj: dict, tol: float = 1e-8, tol_geo: float = 1e-8) -> tuple:
    """Re-derive the verdict of a VerdictFile from its embedded data.

    Returns (verdict, report). A certificate counts only if it verifies
    exactly (rationalizing float data first); a measure counts only if its
    moments match within tol, recomputed in rational arithmetic.
    """
    if not isinstance(obj, dict) or "problem" not in obj:
        raise InputError("verdict file: missing embedded 'problem'")
    problem = parse_problem(obj["problem"], "problem")
    report: dict = {"claimed": obj.get("verdict")}
    cert_ok = meas_ok = False
    if obj.get("certificate") is not None:
        cert, exact = _certificate_from_json(obj["certificate"], problem, "certificate")
        if not exact:
            try:
                cert = project_and_verify(cert, problem.y, problem.g, max_den=10 ** 8)
            except (RoundingFailed, ValueError) as exc:
                report["certificate"] = {"ok": False, "reason": str(exc)}
                cert = None
        if cert is not None:
            try:
                check = verify_certificate(cert, problem.y, problem.d)
            except ValueError as exc:
                check = {"ok": False, "reason": str(exc)}
            check.pop("pivots", None)
            report["certificate"] = check
            cert_ok = bool(check.get("ok"))
    if obj.get("measure") is not None:
        m = obj["measure"]
        try:
            w = np.array([_opt_float(v, "measure.weights") for v in m["weights"]], float)
            U = np.array([[_opt_float(v, "measure.atoms") for v in u] for u in m["atoms"]],
                         float).reshape(len(w), problem.n)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"measure: malformed atoms/weights ({exc})") from exc
        cand = AtomicMeasure(w, U)
        resid = exact_residual(cand, problem.y)
        slack = min((problem.g.slack(u) for u in U), default=math.inf)
        meas_ok = bool(len(w) and np.all(w > 0) and resid <= tol and slack >= -tol_geo)
        report["measure"] = {"ok": meas_ok, "residual": resid, "feasibility_slack": slack}
    if cert_ok and meas_ok:
        # cannot both hold for valid data; treat the file as inconsistent
        report["conflict"] = "both a certificate and a measure verify"
        return "undetermined", report
    if cert_ok:
        return "unrepresentable", report
    if meas_ok:
        return "representable", report
    return "undetermined", report


def cmd_verify(args) -> int:
    obj = _load_json(args.verdict)
    tol = args.tol if args.tol is not None else 1e-8
    verdict, report = verify_verdict(obj, tol=tol)
    report["verdict"] = verdict
    if args.out:
        _write(report, args.out)
    else:
        print(f"verdict: {verdict}")
        if report.get("claimed") not in (None, verdict):
            print(f"note: file claims {report['claimed']!r}")
    return VERDICT_EXIT[verdict]


def cmd_stats(args) -> int:
    problem = parse_problem(_load_json(args.problem), str(args.problem))
    text = json.dumps(stats_json(problem), sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 3), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", "-o", help="write the JSON result here (default: stdout)")
    common.add_argument("--schedule", help='truncation degrees to try, e.g. "6,8,10"')
    common.add_argument("--max-degree", type=int, help="cap for the default schedule")
    common.add_argument("--max-den", type=int, help="largest denominator used when rounding")
    common.add_argument("--tol", type=float, help="moment residual tolerance for measures (1e-8)")
    common.add_argument("--budget", type=int, help="restarts per atom count (50)")
    common.add_argument("--threads", type=int, help="degrees solved in parallel (1)")
    common.add_argument("--seed", type=int, help="seed for the measure search (0)")
    common.add_argument("--no-exact", action="store_true", help="skip rational verification")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="momentcert", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("certify", parents=[common], help="certificate or measure for a problem")
    p.add_argument("problem")
    p.set_defaults(func=cmd_certify)
    p = sub.add_parser("find-certificate", parents=[common], help="only search for a certificate")
    p.add_argument("problem")
    p.add_argument("--degree", "-D", type=int, help="single truncation degree")
    p.set_defaults(func=cmd_find_certificate)
    p = sub.add_parser("find-measure", parents=[common], help="only search for an atomic measure")
    p.add_argument("problem")
    p.set_defaults(func=cmd_find_measure)
    p = sub.add_parser("verify", help="re-check a verdict file independently")
    p.add_argument("verdict")
    p.add_argument("--out", "-o")
    p.add_argument("--tol", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("stats", help="input size statistics")
    p.add_argument("problem")
    p.add_argument("--out", "-o")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (InvalidDegree, ZeroMassViolation, sdp.IllPosed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ValueError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
