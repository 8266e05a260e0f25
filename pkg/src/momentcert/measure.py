"""Recovering finitely atomic representing measures.

The search is heuristic (multistart Levenberg-Marquardt on the Vandermonde
equations, plus a Hankel fast path for n = 1), but every accepted measure is
re-checked: its moment residual is recomputed exactly from the float atoms
and weights, so an accepted output is sound whatever the search did.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
from scipy.optimize import least_squares

from .polycore import (MomentVector, MonomialBasis, SemialgebraicDescription,
                       localizing_matrix, moment_matrix, num_monomials)

log = logging.getLogger(__name__)

RANK_GAP = 1e6
# function evaluations per parameter allowed in one local solve
MAX_NFEV_PER_PARAM = 30


@dataclass
class AtomicMeasure:
    """sum_i weights[i] * delta_{points[i]}."""

    weights: np.ndarray
    points: np.ndarray                  # shape (s, n)
    residual: float = math.nan
    feasibility_slack: float = math.inf
    verified_residual: float | None = None

    @property
    def s(self) -> int:
        return len(self.weights)

    @property
    def atoms(self) -> list:
        return [(float(c), tuple(float(v) for v in u)) for c, u in zip(self.weights, self.points)]


@dataclass
class NotFound:
    """No measure accepted within the budget. Not a proof of anything."""

    reason: str
    prescreen: dict | None = None
    best_residual: dict = field(default_factory=dict)   # s -> smallest residual seen
    restarts: int = 0


@dataclass
class Inconclusive:
    reason: str
    singular_values: list = field(default_factory=list)


def _vandermonde(points: np.ndarray, exps) -> np.ndarray:
    """V[a, i] = u_i^a for every exponent a in exps."""
    E = np.asarray(exps, dtype=float)
    pts = np.atleast_2d(points)
    if pts.shape[0] == 0:
        return np.zeros((len(exps), 0))
    return np.prod(pts[None, :, :] ** E[:, None, :], axis=2)


def vandermonde_residual(candidate: AtomicMeasure, y: MomentVector) -> float:
    """max_a |sum_i c_i u_i^a - y_a| over the basis of y."""
    V = _vandermonde(np.asarray(candidate.points, float), y.basis.exponents)
    return float(np.max(np.abs(V @ np.asarray(candidate.weights, float) - y.as_array())))


def exact_residual(candidate: AtomicMeasure, y: MomentVector) -> float:
    """Same as vandermonde_residual, computed in rational arithmetic from
    the float data (no rounding until the final conversion)."""
    ws = [Fraction(float(c)) for c in candidate.weights]
    pts = [[Fraction(float(v)) for v in u] for u in candidate.points]
    worst = Fraction(0)
    for a, ya in zip(y.basis.exponents, y.values):
        s = Fraction(0)
        for c, u in zip(ws, pts):
            term = c
            for ui, ai in zip(u, a):
                if ai:
                    term *= ui ** ai
            s += term
        worst = max(worst, abs(s - Fraction(ya)))
    return float(worst)


def _min_eig_scaled(M) -> tuple:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return math.inf, 1.0
    scale = max(1.0, float(np.abs(M).max()))
    return float(np.linalg.eigvalsh(M)[0]), scale


def psd_prescreen(y: MomentVector, g: SemialgebraicDescription, d: int | None = None,
                  rel_tol: float = 1e-8) -> dict:
    """Necessary conditions: M_{floor(d/2)}(y) and the localizing matrices
    of every g_j must be PSD (up to rel_tol times the largest entry)."""
    d = y.d if d is None else d
    report = {"passed": True, "checks": []}
    mats = [("moment", moment_matrix(y, d // 2))]
    for j, gj in enumerate(g.g, start=1):
        if gj.is_zero():
            continue
        order = (d - int(gj.degree())) // 2
        if order >= 0:
            mats.append((f"localizing_{j}", localizing_matrix(y, gj, order)))
    for name, M in mats:
        lmin, scale = _min_eig_scaled(M)
        ok = lmin >= -rel_tol * scale
        report["checks"].append({"matrix": name, "min_eig": lmin, "scale": scale, "ok": ok})
        if not ok:
            report["passed"] = False
    return report


def _numerical_rank(M, gap: float = RANK_GAP):
    """Rank at the first singular-value gap >= gap; full rank if the matrix
    is well conditioned; None if neither (ambiguous)."""
    sv = np.linalg.svd(np.asarray(M, float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0, sv
    for i in range(len(sv) - 1):
        if sv[i + 1] == 0 or sv[i] / sv[i + 1] >= gap:
            return i + 1, sv
    if sv[-1] * gap >= sv[0]:
        return len(sv), sv
    return None, sv


def _accept(weights, points, y, g, tol, tol_geo):
    cand = AtomicMeasure(np.asarray(weights, float), np.atleast_2d(np.asarray(points, float)))
    cand.residual = vandermonde_residual(cand, y)
    cand.feasibility_slack = min((g.slack(u) for u in cand.points), default=math.inf)
    if cand.residual > tol or cand.feasibility_slack < -tol_geo:
        return None
    cand.verified_residual = exact_residual(cand, y)
    if cand.verified_residual > tol:
        return None
    return cand


def hankel_atoms_1d(y: MomentVector, d: int | None = None,
                    g: SemialgebraicDescription | None = None,
                    tol: float = 1e-8, tol_geo: float = 1e-8):
    """Atoms of a univariate y from a flat Hankel moment matrix."""
    if y.n != 1:
        raise ValueError("hankel_atoms_1d needs n = 1")
    d = y.d if d is None else d
    g = g or SemialgebraicDescription(1, ())
    v = y.as_array()
    k = d // 2
    r, sv = _numerical_rank(moment_matrix(y.to_float(), k))
    if r is None:
        return Inconclusive("no clear singular-value gap in the Hankel matrix", list(sv))
    if r == 0:
        return Inconclusive("zero moment matrix", list(sv))
    if r > k:
        return Inconclusive(f"Hankel matrix of order {k} has full rank {r}; no flat extension", list(sv))
    r_prev, sv_prev = _numerical_rank(moment_matrix(y.to_float(), r - 1))
    if r_prev != r:
        return Inconclusive(f"rank(M_{r}) = {r} but rank(M_{r - 1}) = {r_prev}: not flat", list(sv))
    H0 = np.array([[v[i + j] for j in range(r)] for i in range(r)])
    H1 = np.array([[v[i + j + 1] for j in range(r)] for i in range(r)])
    nodes = sla.eigvals(H1, H0)
    if np.any(np.abs(nodes.imag) > 1e-8 * (1 + np.abs(nodes.real))):
        return Inconclusive("complex atoms", list(sv))
    nodes = np.sort(nodes.real)
    V = _vandermonde(nodes[:, None], y.basis.exponents)
    w, *_ = np.linalg.lstsq(V, v, rcond=None)
    if np.any(w <= 0):
        return Inconclusive("nonpositive weights from the Vandermonde solve", list(sv))
    cand = _accept(w, nodes[:, None], y, g, tol, tol_geo)
    if cand is None:
        return Inconclusive("recovered atoms fail the residual or support check", list(sv))
    return cand


def _moment_box(y: MomentVector, g: SemialgebraicDescription):
    """A box where initial atoms are drawn: from a ball constraint if one is
    present, otherwise from the size of the even moments."""
    n = y.n
    y0 = float(y.y0)
    half = []
    for k in range(n):
        r = 0.0
        for m in range(1, y.d // 2 + 1):
            e = tuple(2 * m if j == k else 0 for j in range(n))
            r = max(r, (abs(float(y[e])) / y0) ** (1.0 / (2 * m)))
        half.append(1.5 * max(r, 1e-3))
    for gi in g.g:
        c = gi.coeffs
        const = c.pop((0,) * n, 0)
        squares = {tuple(2 if j == i else 0 for j in range(n)) for i in range(n)}
        if const > 0 and set(c) == squares and len(set(c.values())) == 1 and next(iter(c.values())) < 0:
            R = math.sqrt(float(const) / -float(next(iter(c.values()))))
            half = [min(h, R) for h in half]
    return [(-h, h) for h in half]


class _Fit:
    """Residuals and Jacobian of the penalized Vandermonde system."""

    def __init__(self, y: MomentVector, g: SemialgebraicDescription, s: int):
        self.n, self.s = y.n, s
        self.exps = np.asarray(y.basis.exponents, dtype=int)
        self.yv = y.as_array()
        self.g = [gi.to_float() for gi in g.g]
        self.grads = [[p.to_float() for p in gi.gradient()] for gi in self.g]
        self.rho = 1.0

    def unpack(self, z):
        return z[:self.s], z[self.s:].reshape(self.s, self.n)

    def _g_values(self, U):
        return np.array([gi.evaluate_many(U) for gi in self.g]) if self.g else np.zeros((0, self.s))

    def fun(self, z):
        t, U = self.unpack(z)
        V = _vandermonde(U, self.exps)
        r = V @ (t * t) - self.yv
        if self.g:
            pen = math.sqrt(self.rho) * np.maximum(0.0, -self._g_values(U))
            r = np.concatenate([r, pen.ravel()])
        return r

    def jac(self, z):
        t, U = self.unpack(z)
        m = len(self.exps)
        V = _vandermonde(U, self.exps)
        J = np.zeros((m + len(self.g) * self.s, self.s * (1 + self.n)))
        J[:m, :self.s] = 2 * V * t
        c = t * t
        for k in range(self.n):
            ek = self.exps[:, k]
            dexp = self.exps.copy()
            dexp[:, k] = np.maximum(ek - 1, 0)
            Vk = _vandermonde(U, dexp) * ek[:, None]
            J[:m, self.s + np.arange(self.s) * self.n + k] = Vk * c
        if self.g:
            G = self._g_values(U)
            sq = math.sqrt(self.rho)
            for j in range(len(self.g)):
                for i in range(self.s):
                    if G[j, i] < 0:
                        row = m + j * self.s + i
                        for k in range(self.n):
                            J[row, self.s + i * self.n + k] = -sq * self.grads[j][k](U[i])
        return J


def _newton_project(u, g: SemialgebraicDescription, tol_geo: float):
    """One Newton step towards g_j(u) = 0 for the most violated g_j, used
    only when the violation is already within tol_geo."""
    vals = [float(gi(u)) for gi in g.g]
    if not vals:
        return u
    j = int(np.argmin(vals))
    if not -tol_geo < vals[j] < 0:
        return u
    grad = np.array([float(p(u)) for p in g.g[j].gradient()])
    nrm = float(grad @ grad)
    if nrm == 0:
        return u
    return np.asarray(u, float) - vals[j] * grad / nrm


def _rank_lower_bound(y: MomentVector) -> int:
    M = np.asarray(moment_matrix(y.to_float(), y.d // 2), float)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 1
    # deliberately loose threshold so that the count never overshoots
    return max(1, int(np.sum(sv > 1e-4 * sv[0])))


def find_measure(n: int, d: int, y: MomentVector, g: SemialgebraicDescription,
                 tol: float = 1e-8, tol_geo: float = 1e-8, budget: int = 50,
                 max_atoms: int = 30, seed: int = 0, prescreen: bool = True):
    """Search for an s-atomic representing measure, s increasing."""
    if not (tol > 0 and tol_geo > 0):
        raise ValueError("tol and tol_geo must be positive")
    if y.n != n or y.d != d:
        raise ValueError("moment vector does not match (n, d)")
    report = psd_prescreen(y, g, d) if prescreen else None
    if report is not None and not report["passed"]:
        return NotFound("PSD prescreen failed", prescreen=report)

    yf = y.to_float()
    y0 = float(yf.y0)
    if y0 <= 0:
        return NotFound("y_0 must be positive", prescreen=report)

    if n == 1:
        fast = hankel_atoms_1d(yf, d, g, tol=tol, tol_geo=tol_geo)
        if isinstance(fast, AtomicMeasure):
            fast.verified_residual = exact_residual(fast, y)
            if fast.verified_residual <= tol:
                return fast

    rng = np.random.default_rng(seed)
    box = _moment_box(yf, g)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    s_max = min(num_monomials(n, d), max_atoms)
    s_min = min(_rank_lower_bound(yf), s_max)
    best: dict = {}
    restarts = 0
    for s in range(s_min, s_max + 1):
        fit = _Fit(yf, g, s)
        m = len(fit.exps) + len(fit.g) * s
        method = "lm" if m >= s * (1 + n) else "trf"
        for r in range(budget):
            restarts += 1
            fit.rho = 10.0 ** (r // 10)
            U0 = lo + (hi - lo) * rng.random((s, n))
            if g.g:
                # pull starting points into K where sampling allows
                for i in range(s):
                    for _ in range(20):
                        if g.contains(U0[i]):
                            break
                        U0[i] = lo + (hi - lo) * rng.random(n)
            t0 = np.full(s, math.sqrt(y0 / s)) * (0.5 + rng.random(s))
            z0 = np.concatenate([t0, U0.ravel()])
            try:
                res = least_squares(fit.fun, z0, jac=fit.jac, method=method,
                                    xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=MAX_NFEV_PER_PARAM * len(z0))
            except (ValueError, np.linalg.LinAlgError) as exc:
                log.debug("least_squares failed: %s", exc)
                continue
            t, U = fit.unpack(res.x)
            c = t * t
            keep = c >= 1e-10 * y0
            c, U = c[keep], U[keep]
            if len(c) == 0:
                continue
            U = np.array([_newton_project(u, g, tol_geo) for u in U])
            cand = AtomicMeasure(c, U)
            resid = vandermonde_residual(cand, yf)
            best[s] = min(best.get(s, math.inf), resid)
            acc = _accept(c, U, y, g, tol, tol_geo)
            if acc is not None:
                log.debug("accepted s=%d after %d restarts", s, r + 1)
                return acc
    return NotFound(f"no measure with s <= {s_max} atoms within {budget} restarts per s",
                    prescreen=report, best_residual=best, restarts=restarts)
