"""Unrepresentability certificates and the certificate-or-measure driver.

A certificate for y on K = S(g) is a polynomial p of degree <= d with
L_y(p) = 0 and p = 1 + sum_i sigma_i g_i, sigma_i sums of squares with
deg(sigma_i g_i) <= D. Since p >= 1 on K, such a p rules out every
representing measure supported on K.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import qmc

from . import sdp
from .polycore import (MomentVector, MonomialBasis, Polynomial,
                       SemialgebraicDescription, num_monomials, riesz_apply)
from .qmodule import Certificate, QuadraticModuleTruncation

log = logging.getLogger(__name__)

# bounds sum_i tr(X_i); without it the margin of a certificate is scale-free
DEFAULT_TRACE_BOUND = 10.0


class InvalidDegree(ValueError):
    pass


class ZeroMassViolation(ValueError):
    pass


class NotPSD(ValueError):
    pass


@dataclass
class NotFoundAtDegree:
    D: int
    status: sdp.Status
    margin: float
    witness: sdp.InfeasibilityWitness | None = None
    boundary_suspect: bool = False
    reason: str = ""
    problem: sdp.SdpProblem | None = field(default=None, repr=False)  # the SDP the witness refers to


def _check_inputs(n, d, y: MomentVector, g: SemialgebraicDescription, D):
    if y.n != n or y.d != d:
        raise ValueError(f"moment vector has (n, d) = ({y.n}, {y.d}), expected ({n}, {d})")
    if g.n != n:
        raise ValueError("constraints and moments disagree on n")
    if D < d:
        raise InvalidDegree(f"D = {D} is below the moment degree d = {d}")
    if not y.y0 > 0:
        raise ZeroMassViolation(f"y_0 = {y.y0} must be positive")


def forced_zero_support(trunc: QuadraticModuleTruncation, d: int) -> tuple:
    """Gram monomials that can be dropped without changing the feasible set.

    A coefficient row above degree d that involves only diagonal Gram
    entries, all with the same sign, forces those diagonals (and so their
    rows and columns) to vanish. Repeated until nothing changes; returns
    the kept indices for each block.
    """
    kept = [set(range(s)) for s in trunc.gram_sides]
    rows = {}
    for blk in range(len(trunc.bases)):
        for beta, terms in trunc.gram_terms(blk).items():
            if sum(beta) > d:
                rows.setdefault(beta, []).extend((blk, j, k, c) for (j, k), c in terms)
    changed = True
    while changed:
        changed = False
        for terms in rows.values():
            agg: dict = {}
            for blk, j, k, c in terms:
                if j in kept[blk] and k in kept[blk]:
                    agg[(blk, j, k)] = agg.get((blk, j, k), 0) + c
            agg = {key: c for key, c in agg.items() if c != 0}
            if not agg or any(j != k for _, j, k in agg):
                continue
            signs = {c > 0 for c in agg.values()}
            if len(signs) == 1:
                for blk, j, _ in agg:
                    kept[blk].discard(j)
                changed = True
    return tuple(tuple(sorted(s)) for s in kept)


def _certificate_sdp(n, d, y, g, D, trace_bound, reduce):
    _check_inputs(n, d, y, g, D)
    trunc = QuadraticModuleTruncation(g, D)
    support = forced_zero_support(trunc, d) if reduce else tuple(
        tuple(range(s)) for s in trunc.gram_sides)
    pos = [{j: a for a, j in enumerate(sup)} for sup in support]
    pbasis = MonomialBasis(n, d)
    yv = [float(v) for v in y.values]
    eqs = [sdp.Equality({}, {i: yv[i] for i in range(len(pbasis)) if yv[i] != 0.0}, 0.0)]
    rows: dict = {beta: {} for beta in MonomialBasis(n, D).exponents}
    for blk in range(len(trunc.bases)):
        for beta, terms in trunc.gram_terms(blk).items():
            row = rows[beta]
            for (j, k), c in terms:
                if j not in pos[blk] or k not in pos[blk]:
                    continue
                key = (blk, pos[blk][j], pos[blk][k])
                row[key] = row.get(key, 0.0) + float(c)
    zero = (0,) * n
    for beta, row in rows.items():
        free = {pbasis.index_of(beta): -1.0} if sum(beta) <= d else {}
        rhs = -1.0 if beta == zero else 0.0
        if not row and not free and rhs == 0.0:
            continue
        eqs.append(sdp.Equality(row, free, rhs))
    prob = sdp.SdpProblem(blocks=tuple(len(s) for s in support), free_dim=len(pbasis),
                          equalities=tuple(eqs), trace_bound=trace_bound)
    return prob, trunc, support


def build_certificate_sdp(n: int, d: int, y: MomentVector, g: SemialgebraicDescription, D: int,
                          trace_bound: float | None = DEFAULT_TRACE_BOUND,
                          reduce: bool = False) -> sdp.SdpProblem:
    """Gram-matrix SDP for p in 1 + Q(g)[D] with L_y(p) = 0.

    Free scalars are the coefficients p_a, |a| <= d, in graded-lex order.
    Row 0 is L_y(p) = 0; then one row per exponent beta with |beta| <= D
    matching [x^beta](sum sigma_i g_i) - p_beta = -[beta = 0], where
    p_beta = 0 above degree d. With reduce=True the Gram blocks are cut
    down to ``forced_zero_support``.
    """
    return _certificate_sdp(n, d, y, g, D, trace_bound, reduce)[0]


def _expand(X, support, side):
    full = np.zeros((side, side))
    idx = np.asarray(support, dtype=int)
    if len(idx):
        full[np.ix_(idx, idx)] = X
    return full


def certificate_float_checks(cert: Certificate, y: MomentVector) -> dict:
    """The three certificate invariants, evaluated in floating point."""
    yf = y.to_float()
    p = cert.p.to_float()
    riesz = abs(float(riesz_apply(yf, p)))
    ynorm = max(abs(v) for v in yf.values)
    pnorm = max((abs(c) for _, c in p.items()), default=0.0)
    ident = cert.truncation.combine([np.asarray(X, float) for X in cert.grams])
    resid = p - 1 - ident
    ident_err = max((abs(c) for _, c in resid.items()), default=0.0)
    gnorm = max((float(np.max(np.abs(X))) for X in cert.grams if np.size(X)), default=0.0)
    scale = max(1.0, pnorm, gnorm)
    min_eig = min((float(np.linalg.eigvalsh(np.asarray(X, float))[0])
                   for X in cert.grams if len(X)), default=math.inf)
    return {
        "riesz": riesz,
        "riesz_ok": riesz <= 1e-8 * max(ynorm, 1e-300) * max(pnorm, 1e-300) + 1e-300,
        "identity": ident_err,
        "identity_ok": ident_err <= 1e-7 * scale,
        "min_eig": min_eig,
        "psd_ok": min_eig >= -1e-9,
    }


def find_certificate(n: int, d: int, y: MomentVector, g: SemialgebraicDescription, D: int,
                     tol: float = 1e-9, trace_bound: float | None = DEFAULT_TRACE_BOUND,
                     margin_threshold: float = sdp.DEFAULT_MARGIN_THRESHOLD,
                     max_iter: int = 200):
    """Search for a certificate at degree D; Certificate or NotFoundAtDegree."""
    prob, trunc, support = _certificate_sdp(n, d, y, g, D, trace_bound, reduce=True)
    sol = sdp.solve_max_margin(prob, tol=tol, max_iter=max_iter, margin_threshold=margin_threshold)
    if sol.status is sdp.Status.NUMERICAL_FAILURE:
        raise sdp.NumericalFailure(f"SDP at D={D} did not converge in {sol.iterations} iterations "
                                   f"(residuals {sol.residuals})")
    if sol.status is sdp.Status.INFEASIBLE:
        return NotFoundAtDegree(D, sol.status, sol.margin, witness=sol.witness, problem=prob)
    if sol.status is sdp.Status.MARGINAL:
        return NotFoundAtDegree(D, sol.status, sol.margin, boundary_suspect=True, problem=prob)
    pbasis = MonomialBasis(n, d)
    p = Polynomial.from_dense(pbasis, [float(v) for v in sol.free_values])
    grams = [_expand(np.array(X), sup, side)
             for X, sup, side in zip(sol.block_values, support, trunc.gram_sides)]
    cert = Certificate(p=p, grams=grams, D=D, margin=float(sol.margin), g=g, support=support)
    checks = certificate_float_checks(cert, y)
    if not (checks["riesz_ok"] and checks["identity_ok"] and checks["psd_ok"]):
        return NotFoundAtDegree(D, sol.status, sol.margin, problem=prob,
                                reason=f"float checks failed: {checks}")
    return cert


def extract_sos(cert: Certificate, psd_tol: float = 1e-6) -> list:
    """Factor each Gram matrix into squares: sigma_i = sum_j q_ij(x)^2."""
    trunc = cert.truncation
    out = []
    for blk, X in enumerate(cert.grams):
        X = np.asarray(X, dtype=float)
        basis = trunc.bases[blk]
        if X.size == 0:
            out.append([])
            continue
        w, V = np.linalg.eigh((X + X.T) / 2)
        if w[0] < -psd_tol:
            raise NotPSD(f"Gram block {blk} has eigenvalue {w[0]:.3e}")
        squares = []
        for lam, vec in zip(w, V.T):
            if lam <= 0:
                continue
            q = Polynomial.from_dense(basis, math.sqrt(lam) * vec)
            if not q.is_zero():
                squares.append(q)
        out.append(squares)
    return out


def reconstruct(cert: Certificate, squares: list) -> Polynomial:
    """1 + sum_i (sum_j q_ij^2) g_i from an extract_sos factorization."""
    trunc = cert.truncation
    total = Polynomial.constant(cert.p.n, 1.0)
    for gen, qs in zip(trunc.generators, squares):
        sigma = Polynomial(cert.p.n)
        for q in qs:
            sigma = sigma + q * q
        total = total + sigma * gen
    return total


def scale_certificate(f: Polynomial, delta) -> Polynomial:
    """f / delta: for f positive on K with 0 < delta < min_K f, the result
    minus one is again positive on K."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    inv = Fraction(1) / Fraction(delta) if isinstance(delta, (int, Fraction)) else 1.0 / delta
    return f * inv


def default_schedule(n: int, d: int, max_D: int | None = None) -> list:
    """d, d+2, ..., d + 2 ceil(n d / 2), truncated at max_D."""
    top = d + 2 * math.ceil(n * d / 2)
    sched = list(range(d, top + 1, 2))
    if max_D is not None:
        sched = [D for D in sched if D <= max_D] or [d]
    return sched


def sample_in_set(g: SemialgebraicDescription, box, count: int, seed: int = 0,
                  max_draws: int | None = None) -> np.ndarray:
    """Quasi-random points of S(g) inside box = [(lo, hi)] * n, by rejection."""
    n = g.n
    lo = np.array([b[0] for b in box], float)
    hi = np.array([b[1] for b in box], float)
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    max_draws = max_draws or 64 * count
    kept = []
    drawn = 0
    while sum(len(k) for k in kept) < count and drawn < max_draws:
        m = 2 ** int(math.ceil(math.log2(max(count, 2))))
        pts = lo + (hi - lo) * sampler.random(m)
        drawn += m
        ok = np.ones(m, bool)
        for gi in g.g:
            ok &= gi.to_float().evaluate_many(pts) >= 0
        kept.append(pts[ok])
    pts = np.vstack(kept) if kept else np.zeros((0, n))
    return pts[:count]


def sampled_minimum(p: Polynomial, g: SemialgebraicDescription, box, count: int = 10_000,
                    seed: int = 0) -> float:
    """min of p over quasi-random samples of S(g); a heuristic positivity probe."""
    pts = sample_in_set(g, box, count, seed=seed)
    if len(pts) == 0:
        return math.inf
    return float(p.to_float().evaluate_many(pts).min())


@dataclass
class CertifyOptions:
    tol: float = 1e-9
    margin_threshold: float = sdp.DEFAULT_MARGIN_THRESHOLD
    trace_bound: float | None = DEFAULT_TRACE_BOUND
    max_iter: int = 200
    exact: bool = True
    max_den_schedule: tuple = (10 ** 2, 10 ** 4, 10 ** 6, 10 ** 8)
    measure_tol: float = 1e-8
    tol_geo: float = 1e-8
    budget: int = 50
    max_atoms: int = 30
    seed: int = 0
    threads: int = 1


@dataclass
class Verdict:
    kind: str                                   # unrepresentable | representable | undetermined
    certificate: Certificate | None = None
    rational_certificate: object | None = None  # exact.RationalCertificate
    D_used: int | None = None
    measure: object | None = None               # measure.AtomicMeasure
    max_D_tried: int | None = None
    measure_report: object | None = None
    diagnostics: list = field(default_factory=list)
    unverified_certificate: Certificate | None = None

    @property
    def exact(self) -> bool:
        return self.rational_certificate is not None


def _attempt(n, d, y, g, D, opts: CertifyOptions):
    try:
        res = find_certificate(n, d, y, g, D, tol=opts.tol, trace_bound=opts.trace_bound,
                               margin_threshold=opts.margin_threshold, max_iter=opts.max_iter)
    except sdp.NumericalFailure as exc:
        return D, None, {"D": D, "status": sdp.Status.NUMERICAL_FAILURE.value, "note": str(exc)}
    if isinstance(res, Certificate):
        diag = {"D": D, "status": sdp.Status.STRICTLY_FEASIBLE.value, "margin": res.margin}
        return D, res, diag
    diag = {"D": D, "status": res.status.value, "margin": res.margin,
            "boundary_suspect": res.boundary_suspect}
    if res.witness is not None:
        diag["witness_bound"] = res.witness.bound
    if res.reason:
        diag["note"] = res.reason
    return D, None, diag


def _rationalize(cert: Certificate, y, g, opts: CertifyOptions):
    from .exact import RoundingFailed, project_and_verify

    yq = y.to_rational()
    gq = SemialgebraicDescription(g.n, tuple(gi.to_rational() for gi in g.g))
    for max_den in opts.max_den_schedule:
        try:
            return project_and_verify(cert, yq, gq, max_den=max_den), max_den
        except RoundingFailed as exc:
            log.debug("rounding at max_den=%s failed: %s", max_den, exc)
    return None, None


def certify_moment(n: int, d: int, y: MomentVector, g: SemialgebraicDescription,
                   schedule: list | None = None, options: CertifyOptions | None = None) -> Verdict:
    """Try certificates for each D in the schedule, then fall back to a
    representing-measure search."""
    from .measure import AtomicMeasure, find_measure

    opts = options or CertifyOptions()
    schedule = list(schedule) if schedule is not None else default_schedule(n, d)
    if not schedule:
        raise ValueError("schedule must be nonempty")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be increasing")
    if schedule[0] < d:
        raise InvalidDegree(f"schedule starts at {schedule[0]} < d = {d}")
    _check_inputs(n, d, y, g, schedule[0])

    diagnostics = []
    float_only = None
    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            results = list(pool.map(lambda D: _attempt(n, d, y, g, D, opts), schedule))
    else:
        results = None

    for idx, D in enumerate(schedule):
        _, cert, diag = results[idx] if results is not None else _attempt(n, d, y, g, D, opts)
        diagnostics.append(diag)
        if cert is None:
            continue
        if not opts.exact:
            return Verdict("unrepresentable", certificate=cert, D_used=D,
                           max_D_tried=D, diagnostics=diagnostics)
        rational, max_den = _rationalize(cert, y, g, opts)
        if rational is not None:
            diag["max_den"] = max_den
            return Verdict("unrepresentable", certificate=cert, rational_certificate=rational,
                           D_used=D, max_D_tried=D, diagnostics=diagnostics)
        diag["note"] = "float certificate could not be rationalized"
        float_only = float_only or cert

    if float_only is not None:
        # numerical evidence of unrepresentability without an exact proof
        return Verdict("undetermined", max_D_tried=schedule[-1], diagnostics=diagnostics,
                       unverified_certificate=float_only)

    found = find_measure(n, d, y, g, tol=opts.measure_tol, tol_geo=opts.tol_geo,
                         budget=opts.budget, max_atoms=opts.max_atoms, seed=opts.seed)
    if isinstance(found, AtomicMeasure):
        return Verdict("representable", measure=found, max_D_tried=schedule[-1],
                       diagnostics=diagnostics)
    return Verdict("undetermined", max_D_tried=schedule[-1], measure_report=found,
                   diagnostics=diagnostics)
