"""Rational rounding and exact verification of certificates.

A float certificate from the SDP is rounded entrywise, then the Gram
entries are moved (exactly, by a least-norm correction) onto the affine set
where the degree > d coefficients of sum sigma_i g_i cancel and
L_y(1 + sum sigma_i g_i) = 0. p is then *defined* as 1 + sum sigma_i g_i,
so the identity holds by construction and only PSD-ness can fail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .polycore import (MomentVector, Polynomial, SemialgebraicDescription,
                       riesz_apply)
from .qmodule import Certificate, QuadraticModuleTruncation


class NonFinite(ValueError):
    pass


class RoundingFailed(RuntimeError):
    pass


def round_to_rational(x, max_den: int) -> Fraction:
    """Best rational approximation of x with denominator <= max_den."""
    if max_den < 1:
        raise ValueError("max_den must be >= 1")
    if isinstance(x, (int, Fraction)):
        return Fraction(x).limit_denominator(max_den)
    x = float(x)
    if not math.isfinite(x):
        raise NonFinite(f"cannot round {x}")
    return Fraction(x).limit_denominator(max_den)


@dataclass
class PsdReport:
    is_psd: bool
    pivots: list
    reason: str = ""

    def __bool__(self):
        return self.is_psd


def exact_psd(X) -> PsdReport:
    """LDL' with symmetric (largest-diagonal) pivoting over the rationals.

    PSD iff every pivot is >= 0 and a zero pivot comes with an all-zero
    remaining row.
    """
    A = [[Fraction(v) for v in row] for row in X]
    n = len(A)
    for i in range(n):
        if len(A[i]) != n:
            raise ValueError("matrix is not square")
        for j in range(i):
            if A[i][j] != A[j][i]:
                raise ValueError("matrix is not symmetric")
    active = list(range(n))
    pivots = []
    while active:
        r = max(active, key=lambda i: A[i][i])
        piv = A[r][r]
        if piv < 0:
            pivots.append(piv)
            return PsdReport(False, pivots, f"negative pivot {piv}")
        if piv == 0:
            # every remaining diagonal is <= 0 here, hence == 0
            for i in active:
                for j in active:
                    if A[i][j] != 0:
                        pivots.append(piv)
                        return PsdReport(False, pivots, "zero pivot with nonzero remainder")
            pivots.extend([Fraction(0)] * len(active))
            return PsdReport(True, pivots)
        pivots.append(piv)
        active.remove(r)
        col = {i: A[i][r] for i in active}
        for i in active:
            if col[i] == 0:
                continue
            f = col[i] / piv
            for j in active:
                if col[j]:
                    A[i][j] -= f * col[j]
    return PsdReport(True, pivots)


@dataclass
class RationalCertificate:
    p: Polynomial
    grams: list          # nested lists of Fractions
    D: int
    g: SemialgebraicDescription

    @property
    def truncation(self) -> QuadraticModuleTruncation:
        return QuadraticModuleTruncation(self.g, self.D)


def verify_certificate(cert, y: MomentVector, d: int | None = None) -> dict:
    """Check the certificate invariants with zero tolerance.

    Works for any object with p, grams, D, g (rational entries)."""
    d = y.d if d is None else d
    trunc = QuadraticModuleTruncation(cert.g, cert.D)
    out = {"degree": False, "riesz": False, "identity": False, "psd": False, "pivots": []}
    grams = [[[Fraction(v) for v in row] for row in X] for X in cert.grams]
    if len(grams) != len(trunc.gram_sides) or any(
            len(X) != s for X, s in zip(grams, trunc.gram_sides)):
        out["reason"] = "Gram block sizes do not match the truncation"
        return out
    p = cert.p.to_rational()
    out["degree"] = p.degree() <= d
    out["riesz"] = out["degree"] and riesz_apply(y.to_rational(), p) == 0
    out["identity"] = (p - 1 - trunc.combine(grams)).is_zero()
    reports = [exact_psd(X) for X in grams]
    out["psd"] = all(r.is_psd for r in reports)
    out["pivots"] = [r.pivots for r in reports]
    out["ok"] = out["degree"] and out["riesz"] and out["identity"] and out["psd"]
    return out


def _solve_rational(G, r):
    """Some solution z of G z = r (G square, maybe singular), or None."""
    m = len(G)
    aug = [list(G[i]) + [r[i]] for i in range(m)]
    pivcols = []
    row = 0
    for col in range(m):
        pr = next((i for i in range(row, m) if aug[i][col] != 0), None)
        if pr is None:
            continue
        aug[row], aug[pr] = aug[pr], aug[row]
        inv = 1 / aug[row][col]
        aug[row] = [v * inv for v in aug[row]]
        for i in range(m):
            if i != row and aug[i][col] != 0:
                f = aug[i][col]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[row])]
        pivcols.append(col)
        row += 1
        if row == m:
            break
    if any(aug[i][m] != 0 for i in range(row, m)):
        return None
    z = [Fraction(0)] * m
    for i, col in enumerate(pivcols):
        z[col] = aug[i][m]
    return z


def project_and_verify(cand: Certificate, y: MomentVector, g: SemialgebraicDescription,
                       max_den: int = 10 ** 6, slack: float = 0.0) -> RationalCertificate:
    """Round a float certificate and repair it into an exact one."""
    if cand.margin < slack:
        raise RoundingFailed(f"margin {cand.margin} is below the requested slack {slack}")
    y = y.to_rational()
    d = y.d
    trunc = QuadraticModuleTruncation(g, cand.D)
    sides = trunc.gram_sides
    support = cand.support or tuple(tuple(range(s)) for s in sides)

    # variables: upper-triangle entries inside the support
    var = {}
    grams = []
    for blk, (X, sup) in enumerate(zip(cand.grams, support)):
        side = sides[blk]
        Q = [[Fraction(0)] * side for _ in range(side)]
        for a, j in enumerate(sup):
            for k in sup[a:]:
                v = X[j][k]
                Q[j][k] = Q[k][j] = (Fraction(v) if isinstance(v, (int, Fraction))
                                     else round_to_rational(v, max_den))
                var[(blk, j, k)] = len(var)
        grams.append(Q)

    # constraint rows: cancellation above degree d, and L_y(p) = 0
    hi: dict = {}
    riesz = {}
    basis = y.basis
    for blk in range(len(sides)):
        for beta, terms in trunc.gram_terms(blk).items():
            for (j, k), c in terms:
                key = (blk, j, k)
                if key not in var:
                    continue
                c = Fraction(c)
                if sum(beta) > d:
                    row = hi.setdefault(beta, {})
                    row[var[key]] = row.get(var[key], 0) + c
                else:
                    yb = y.values[basis.index_of(beta)]
                    if yb:
                        riesz[var[key]] = riesz.get(var[key], 0) + c * yb
    rows = [r for r in hi.values() if any(r.values())] + [riesz]
    rhs = [Fraction(0)] * (len(rows) - 1) + [-y.y0]

    x = [Fraction(0)] * len(var)
    for (blk, j, k), i in var.items():
        x[i] = grams[blk][j][k]
    resid = [b - sum(c * x[i] for i, c in row.items()) for row, b in zip(rows, rhs)]
    if any(resid):
        G = [[sum(c * r2.get(i, 0) for i, c in r1.items()) for r2 in rows] for r1 in rows]
        z = _solve_rational(G, resid)
        if z is None:
            raise RoundingFailed("coefficient-matching constraints are inconsistent on this support")
        for row, zr in zip(rows, z):
            if zr:
                for i, c in row.items():
                    x[i] += zr * c
        for (blk, j, k), i in var.items():
            grams[blk][j][k] = grams[blk][k][j] = x[i]

    for blk, Q in enumerate(grams):
        rep = exact_psd(Q)
        if not rep.is_psd:
            raise RoundingFailed(f"Gram block {blk} is not PSD after projection ({rep.reason})")
    p = 1 + trunc.combine(grams)
    p = Polynomial(p.n, {e: Fraction(c) for e, c in p.items()})
    rc = RationalCertificate(p=p, grams=grams, D=cand.D, g=g)
    check = verify_certificate(rc, y)
    if not check["ok"]:
        raise RoundingFailed(f"exact verification failed: {check}")
    return rc
