"""Dense primal-dual interior point solver for max-margin SDP feasibility.

Problem form::

    maximize    t
    subject to  sum_b <A_jb, X_b> + sum_i f_ji w_i = b_j     (j = 1..m)
                X_b - t I  PSD                                (every block b)
                sum_b tr(X_b) <= T                            (optional)

with free scalars w. The margin t is positive exactly when the equalities
admit a point with every X_b positive definite.

Internally the margin blocks are shifted, Z_b = X_b - t I, and the problem is
solved in the standard form ``min <C,Z> + c'w  s.t.  A(Z) + F w = b, Z PSD``
by an infeasible-start path-following method with the HKM search direction
and a Mehrotra predictor-corrector step.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

DEFAULT_MARGIN_THRESHOLD = 1e-7
# iterations without a new best residual before giving up
STALL_ITERATIONS = 8
# a best iterate within this multiple of tol still counts as converged
ACCEPT_FACTOR = 10.0


class Status(str, enum.Enum):
    STRICTLY_FEASIBLE = "StrictlyFeasible"
    INFEASIBLE = "Infeasible"
    MARGINAL = "Marginal"
    NUMERICAL_FAILURE = "NumericalFailure"


class IllPosed(ValueError):
    """Equality constraints are inconsistent or reference invalid entries."""


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Equality:
    """sum over (block, i, j), i <= j, of a * X_b[i, j]  +  sum f_k w_k  =  rhs.

    An off-diagonal term refers to the single value X[i, j] = X[j, i].
    """

    block_terms: dict
    free_terms: dict
    rhs: float


@dataclass(frozen=True)
class SdpProblem:
    blocks: tuple
    free_dim: int
    equalities: tuple
    trace_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(int(s) for s in self.blocks))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        for eq in self.equalities:
            for (b, i, j) in eq.block_terms:
                if not 0 <= b < len(self.blocks):
                    raise IllPosed(f"block index {b} out of range")
                if not (0 <= i <= j < self.blocks[b]):
                    raise IllPosed(f"entry ({i}, {j}) is not upper-triangular in block {b}")
            for k in eq.free_terms:
                if not 0 <= k < self.free_dim:
                    raise IllPosed(f"free index {k} out of range")
        if self.trace_bound is not None and not self.trace_bound > 0:
            raise IllPosed("trace bound must be positive")


@dataclass
class InfeasibilityWitness:
    """Dual multipliers (one per equality, plus the trace-bound multiplier)
    proving ``t <= bound`` for every feasible point."""

    multipliers: np.ndarray
    trace_multiplier: float
    bound: float


@dataclass
class SdpSolution:
    status: Status
    margin: float
    block_values: list
    free_values: np.ndarray
    residuals: dict = field(default_factory=dict)
    dual: np.ndarray | None = None          # standard-form multipliers, one per row
    dual_slacks: list | None = None         # S_b per block (trace slack block last)
    trace_slack: float | None = None
    primal_objective: float = math.nan
    dual_objective: float = math.nan
    iterations: int = 0
    witness: InfeasibilityWitness | None = None
    unbounded: bool = False


@dataclass
class _StandardForm:
    A: list            # per block: (m, nb, nb) symmetric coefficient matrices
    F: np.ndarray      # (m, 1 + free_dim); column 0 is the margin t
    b: np.ndarray
    c: np.ndarray      # objective on the free vector (t, w)
    n_margin: int      # number of margin blocks; a trailing 1x1 slack block may follow


def _standard_form(prob: SdpProblem) -> _StandardForm:
    m0 = len(prob.equalities)
    m = m0 + (prob.trace_bound is not None)
    A = [np.zeros((m, nb, nb)) for nb in prob.blocks]
    F = np.zeros((m, 1 + prob.free_dim))
    b = np.zeros(m)
    for j, eq in enumerate(prob.equalities):
        for (blk, i, k), a in eq.block_terms.items():
            if i == k:
                A[blk][j, i, i] += a
            else:
                A[blk][j, i, k] += a / 2
                A[blk][j, k, i] += a / 2
        for k, a in eq.free_terms.items():
            F[j, 1 + k] += a
        b[j] = eq.rhs
    if prob.trace_bound is not None:
        for blk, nb in enumerate(prob.blocks):
            A[blk][m0] = np.eye(nb)
        slack = np.zeros((m, 1, 1))
        slack[m0, 0, 0] = 1.0
        A.append(slack)
        b[m0] = prob.trace_bound
    # X_b = Z_b + t I  moves the margin into the free column 0
    for blk in range(len(prob.blocks)):
        F[:, 0] += np.trace(A[blk], axis1=1, axis2=2)
    if prob.trace_bound is not None:
        F[m0, 0] = float(sum(prob.blocks))
    c = np.zeros(1 + prob.free_dim)
    c[0] = -1.0
    return _StandardForm(A=A, F=F, b=b, c=c, n_margin=len(prob.blocks))


def _flat(sf: _StandardForm) -> np.ndarray:
    parts = [a.reshape(a.shape[0], a.shape[1] * a.shape[2]) for a in sf.A]
    return np.hstack(parts + [sf.F]) if parts else sf.F.copy()


def _preprocess(sf: _StandardForm):
    """Normalize rows and drop linearly dependent ones; returns (kept, scale)."""
    M = _flat(sf)
    norms = np.linalg.norm(M, axis=1)
    bscale = 1.0 + np.abs(sf.b).max(initial=0.0)
    zero = norms <= 1e-14 * max(1.0, norms.max(initial=0.0))
    if np.any(np.abs(sf.b[zero]) > 1e-12 * bscale):
        raise IllPosed("an equality has no variables but a nonzero right-hand side")
    nz = np.flatnonzero(~zero)
    if nz.size == 0:
        return nz, norms
    Mn = M[nz] / norms[nz, None]
    _, R, piv = sla.qr(Mn.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * diag[0]))
    kept = np.sort(nz[piv[:rank]])
    dropped = np.setdiff1d(nz, kept)
    if dropped.size:
        Mk = M[kept] / norms[kept, None]
        Md = M[dropped] / norms[dropped, None]
        coef, *_ = np.linalg.lstsq(Mk.T, Md.T, rcond=None)
        res = sf.b[dropped] / norms[dropped] - coef.T @ (sf.b[kept] / norms[kept])
        if np.abs(res).max() > 1e-8 * bscale:
            raise IllPosed("equality constraints are inconsistent")
    return kept, norms


def _sym(X):
    return (X + X.T) / 2


def _max_step(X, dX):
    """Largest a with X + a dX PSD (X positive definite)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    W = sla.solve_triangular(L, dX, lower=True)
    W = sla.solve_triangular(L, W.T, lower=True)
    lmin = np.linalg.eigvalsh(_sym(W))[0]
    return math.inf if lmin >= 0 else -1.0 / lmin


def _min_eig(X) -> float:
    return float(np.linalg.eigvalsh(_sym(X))[0]) if X.size else math.inf


class _Ipm:
    def __init__(self, A, F, b, c, tol, max_iter):
        self.A = A
        self.Af = [a.reshape(a.shape[0], a.shape[1] * a.shape[2]) for a in A]
        self.F, self.b, self.c = F, b, c
        self.m = b.size
        self.dims = [a.shape[1] for a in A]
        self.tol, self.max_iter = tol, max_iter

    def op(self, Z):
        out = np.zeros(self.m)
        for af, z in zip(self.Af, Z):
            out += af @ z.ravel()
        return out

    def adj(self, lam):
        return [(lam @ af).reshape(nb, nb) for af, nb in zip(self.Af, self.dims)]

    def residuals(self, Z, w, lam, S):
        rp = self.b - self.op(Z) - self.F @ w
        Rd = [-a - s for a, s in zip(self.adj(lam), S)]
        rf = self.c - self.F.T @ lam
        pobj = float(self.c @ w)
        dobj = float(self.b @ lam)
        return rp, Rd, rf, pobj, dobj

    def measures(self, rp, Rd, rf, pobj, dobj, Z, S):
        pinf = np.linalg.norm(rp) / (1 + np.linalg.norm(self.b))
        dinf = (math.sqrt(sum(np.sum(r * r) for r in Rd)) + np.linalg.norm(rf)) / (1 + np.linalg.norm(self.c))
        comp = sum(float(np.sum(z * s)) for z, s in zip(Z, S))
        gap = max(abs(pobj - dobj), abs(comp)) / (1 + abs(pobj) + abs(dobj))
        return pinf, dinf, gap

    def solve(self, on_iterate=None):
        n_total = sum(self.dims)
        anorm = max((np.linalg.norm(af, axis=1).max(initial=0.0) for af in self.Af), default=0.0)
        xi = max(10.0, math.sqrt(n_total),
                 max(((1 + abs(bj)) / (1 + anorm) for bj in self.b), default=1.0) * math.sqrt(n_total))
        eta = max(10.0, math.sqrt(n_total), anorm, np.linalg.norm(self.c))
        Z = [xi * np.eye(nb) for nb in self.dims]
        S = [eta * np.eye(nb) for nb in self.dims]
        w = np.zeros(self.F.shape[1])
        lam = np.zeros(self.m)
        info = {"converged": False, "iterations": 0}
        stall = 0
        # near the optimum the Newton systems lose accuracy and the residuals
        # can climb again; the best iterate seen is kept
        best = (math.inf, None, 0)
        for it in range(self.max_iter):
            rp, Rd, rf, pobj, dobj = self.residuals(Z, w, lam, S)
            pinf, dinf, gap = self.measures(rp, Rd, rf, pobj, dobj, Z, S)
            info.update(iterations=it, pinf=pinf, dinf=dinf, gap=gap)
            if on_iterate is not None and on_iterate(Z, w, lam, S, pinf, dinf, gap):
                info["stopped"] = True
                break
            merit = max(pinf, dinf, gap)
            if merit <= self.tol:
                info["converged"] = True
                break
            if merit < best[0]:
                best = (merit, (Z, w, lam, S, it, pinf, dinf, gap), it)
            elif it - best[2] >= STALL_ITERATIONS:
                info["error"] = "no progress"
                break
            mu = sum(float(np.sum(z * s)) for z, s in zip(Z, S)) / n_total
            try:
                Sinv = [np.linalg.inv(s) for s in S]
                M = np.zeros((self.m, self.m))
                for af, a, z, si in zip(self.Af, self.A, Z, Sinv):
                    G = (z @ a @ si).reshape(self.m, z.size)
                    M += af @ G.T
                M = _sym(M)
                fac = self._factor(M)
                # predictor
                dZa, dwa, dla, dSa = self._direction(fac, Z, Sinv, Rd, rp, rf, [-z for z in Z])
                ap = min(1.0, min(_max_step(z, dz) for z, dz in zip(Z, dZa)))
                ad = min(1.0, min(_max_step(s, ds) for s, ds in zip(S, dSa)))
                mu_aff = sum(float(np.sum((z + ap * dz) * (s + ad * ds)))
                             for z, dz, s, ds in zip(Z, dZa, S, dSa)) / n_total
                sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
                Rc = [sigma * mu * si - z - dz @ ds @ si for si, z, dz, ds in zip(Sinv, Z, dZa, dSa)]
                dZ, dw, dl, dS = self._direction(fac, Z, Sinv, Rd, rp, rf, Rc)
            except (np.linalg.LinAlgError, ValueError) as exc:
                log.debug("linear algebra failure at iteration %d: %s", it, exc)
                info["error"] = str(exc)
                break
            ap = min(_max_step(z, dz) for z, dz in zip(Z, dZ))
            ad = min(_max_step(s, ds) for s, ds in zip(S, dS))
            ap = min(1.0, 0.95 * ap)
            ad = min(1.0, 0.95 * ad)
            if ap < 1e-10 and ad < 1e-10:
                stall += 1
                if stall >= 3:
                    info["error"] = "step length collapsed"
                    break
            else:
                stall = 0
            Z = [_sym(z + ap * dz) for z, dz in zip(Z, dZ)]
            w = w + ap * dw
            lam = lam + ad * dl
            S = [_sym(s + ad * ds) for s, ds in zip(S, dS)]
        else:
            info["iterations"] = self.max_iter
        if not info["converged"] and not info.get("stopped") and best[0] <= ACCEPT_FACTOR * self.tol:
            Z, w, lam, S, it, pinf, dinf, gap = best[1]
            info.update(converged=True, iterations=it, pinf=pinf, dinf=dinf, gap=gap)
        return Z, w, lam, S, info

    def _factor(self, M):
        """Factor the saddle matrix [[M, F], [F', 0]] of the Newton system."""
        q = self.F.shape[1]
        K = np.zeros((self.m + q, self.m + q))
        K[:self.m, :self.m] = M
        K[:self.m, self.m:] = self.F
        K[self.m:, :self.m] = self.F.T
        # symmetric diagonal equilibration
        d = np.sqrt(np.maximum(np.abs(K).max(axis=1), 1e-300))
        Ks = K / d[:, None] / d[None, :]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", sla.LinAlgWarning)
                lu = sla.lu_factor(Ks)
            return ("lu", (K, d, lu))
        except (np.linalg.LinAlgError, sla.LinAlgWarning, ValueError):
            return ("lstsq", (K, d, Ks))

    @staticmethod
    def _ksolve(fac, rhs):
        kind, (K, d, f) = fac
        def once(r):
            r = r / d
            x = sla.lu_solve(f, r) if kind == "lu" else np.linalg.lstsq(f, r, rcond=None)[0]
            return x / d
        x = once(rhs)
        for _ in range(2):  # iterative refinement
            res = rhs - K @ x
            if not np.all(np.isfinite(res)):
                break
            x = x + once(res)
        return x

    def _direction(self, fac, Z, Sinv, Rd, rp, rf, Rc):
        T = [rc - z @ rd @ si for rc, z, rd, si in zip(Rc, Z, Rd, Sinv)]
        h = rp - self.op(T)
        sol = self._ksolve(fac, np.concatenate([h, rf]))
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError("non-finite Newton direction")
        dl, dw = sol[:self.m], sol[self.m:]
        At = self.adj(dl)
        dS = [rd - a for rd, a in zip(Rd, At)]
        dZ = [_sym(t + z @ a @ si) for t, z, a, si in zip(T, Z, At, Sinv)]
        return dZ, dw, dl, dS


def witness_bound(prob: SdpProblem, multipliers, trace_multiplier: float = 0.0) -> float:
    """Upper bound on the margin implied by dual multipliers.

    With S_b = sum_j mult_j A_jb + nu I, the identity
    b'mult + nu T = sum_b <S_b, Z_b> + nu s + t * sum_b tr(S_b)
    bounds t once every S_b is PSD and the free columns are annihilated.
    Small PSD violations are absorbed by raising nu when a trace bound exists.
    Returns +inf if the multipliers prove nothing.
    """
    sf = _standard_form(prob)
    m0 = len(prob.equalities)
    lam = np.zeros(sf.b.size)
    lam[:m0] = np.asarray(multipliers, dtype=float)
    Fp = sf.F[:m0, 1:]
    if Fp.size and np.any(Fp):
        coef, *_ = np.linalg.lstsq(Fp.T @ Fp, Fp.T @ lam[:m0], rcond=None)
        lam[:m0] = lam[:m0] - Fp @ coef
    nu = float(trace_multiplier)
    S = [np.tensordot(lam[:m0], a[:m0], axes=1) for a in sf.A[:sf.n_margin]]
    scale = 1.0 + max((np.abs(s).max(initial=0.0) for s in S), default=0.0)
    emin = min((_min_eig(s) for s in S), default=math.inf)
    if prob.trace_bound is not None:
        need = max(0.0, -(emin + nu), -nu)
        nu = nu + need * (1 + 1e-12) + (1e-15 * scale if need > 0 else 0.0)
        S = [s + nu * np.eye(s.shape[0]) for s in S]
        numer = float(sf.b[:m0] @ lam[:m0]) + nu * prob.trace_bound
    else:
        if emin < -1e-12 * scale:
            return math.inf
        numer = float(sf.b[:m0] @ lam[:m0])
    tau = sum(float(np.trace(s)) for s in S)
    if tau <= 0:
        return math.inf
    return numer / tau


def solve_max_margin(prob: SdpProblem, tol: float = 1e-9, max_iter: int = 100,
                     margin_threshold: float = DEFAULT_MARGIN_THRESHOLD) -> SdpSolution:
    """Maximize the margin t; classify by the sign of t* against margin_threshold."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    sf = _standard_form(prob)
    kept, norms = _preprocess(sf)
    A = [a[kept] / norms[kept, None, None] for a in sf.A]
    F = sf.F[kept] / norms[kept, None]
    b = sf.b[kept] / norms[kept]
    # a free direction invisible to the equalities that raises t: unbounded
    ray_free = np.linalg.lstsq(F.T, sf.c, rcond=None)[0] if F.size else np.zeros(0)
    if not np.any(F[:, 0]) or np.linalg.norm(sf.c - F.T @ ray_free) > 1e-9:
        X = [np.eye(nb) for nb in prob.blocks]
        return SdpSolution(status=Status.STRICTLY_FEASIBLE, margin=math.inf, block_values=X,
                           free_values=np.zeros(prob.free_dim), unbounded=True)
    ipm = _Ipm(A, F, b, sf.c, tol, max_iter)

    unbounded_limit = 1e7 * (1 + np.abs(sf.b).max(initial=0.0))

    def watch(Z, w, lam, S, pinf, dinf, gap):
        # relative to the iterate size, the primal residual stays at rounding level
        return (prob.trace_bound is None and w[0] > unbounded_limit
                and pinf * (1 + np.linalg.norm(b)) <= 1e-9 * (1 + abs(w[0])))

    Z, w, lam_k, S, info = ipm.solve(watch)
    lam = np.zeros(sf.b.size)
    lam[kept] = lam_k / norms[kept]
    t = float(w[0])
    X = [z + t * np.eye(z.shape[0]) for z in Z[:sf.n_margin]]
    trace_slack = float(Z[-1][0, 0]) if prob.trace_bound is not None else None
    sol = SdpSolution(status=Status.NUMERICAL_FAILURE, margin=t, block_values=X,
                      free_values=np.array(w[1:]), dual=lam, dual_slacks=S,
                      trace_slack=trace_slack, primal_objective=t,
                      dual_objective=-float(sf.b @ lam), iterations=info["iterations"])
    sol.residuals = {"primal": info.get("pinf", math.nan), "dual": info.get("dinf", math.nan),
                     "gap": info.get("gap", math.nan)}

    if info.get("stopped"):
        sol.status = Status.STRICTLY_FEASIBLE
        sol.unbounded = True
        sol.margin = math.inf
        return sol

    m0 = len(prob.equalities)
    nu = -float(lam[m0]) if prob.trace_bound is not None else 0.0
    mult = -lam[:m0]
    bound = witness_bound(prob, mult, nu)
    witness = InfeasibilityWitness(multipliers=mult, trace_multiplier=nu, bound=bound)

    if not info["converged"]:
        # a self-validating dual bound still proves infeasibility
        if bound < -margin_threshold:
            sol.status = Status.INFEASIBLE
            sol.witness = witness
        return sol
    if t > margin_threshold:
        sol.status = Status.STRICTLY_FEASIBLE
    elif t < -margin_threshold and bound < -margin_threshold:
        sol.status = Status.INFEASIBLE
        sol.witness = witness
    else:
        sol.status = Status.MARGINAL
    return sol


@dataclass
class KktReport:
    primal: float
    dual: float
    gap: float
    psd: float
    passed: bool


def check_kkt(prob: SdpProblem, sol: SdpSolution, tol: float = 1e-8) -> KktReport:
    """Recompute KKT residuals of a solution from scratch.

    primal: ||b - A(X) - F w||_inf / (1 + ||b||_inf), with X = Z + tI;
    dual:   ||C - A*(lam) - S||_inf and ||c - F' lam||_inf, relative;
    gap:    |<Z, S>| / (1 + |t|);
    psd:    worst negative eigenvalue of Z and S (0 if none).
    """
    sf = _standard_form(prob)
    t = float(sol.margin)
    Z = [np.asarray(x, float) - t * np.eye(len(x)) for x in sol.block_values]
    if prob.trace_bound is not None:
        Z.append(np.array([[sol.trace_slack if sol.trace_slack is not None else
                            prob.trace_bound - sum(np.trace(x) for x in sol.block_values)]]))
    w = np.concatenate([[t], np.asarray(sol.free_values, float)])
    Azw = sf.F @ w
    for a, z in zip(sf.A, Z):
        Azw = Azw + np.tensordot(a, z, axes=([1, 2], [0, 1]))
    bscale = 1 + np.abs(sf.b).max(initial=0.0)
    primal = float(np.abs(sf.b - Azw).max(initial=0.0)) / bscale
    psd_viol = max(0.0, -min((_min_eig(z) for z in Z), default=0.0))
    if sol.dual is None or sol.dual_slacks is None:
        dual = math.inf
        gap = math.inf
    else:
        lam = np.asarray(sol.dual, float)
        S = [np.asarray(s, float) for s in sol.dual_slacks]
        dres = max(float(np.abs(-np.tensordot(lam, a, axes=1) - s).max(initial=0.0))
                   for a, s in zip(sf.A, S))
        fres = float(np.abs(sf.c - sf.F.T @ lam).max(initial=0.0))
        lscale = 1 + np.abs(lam).max(initial=0.0)
        dual = max(dres, fres) / lscale
        gap = abs(sum(float(np.sum(z * s)) for z, s in zip(Z, S))) / (1 + abs(t))
        psd_viol = max(psd_viol, -min((_min_eig(s) for s in S), default=0.0))
    passed = max(primal, dual, gap, psd_viol) <= tol
    return KktReport(primal=primal, dual=dual, gap=gap, psd=psd_viol, passed=passed)
