"""Degree-D truncations of a quadratic module and their Gram parametrization."""
from __future__ import annotations

from dataclasses import dataclass, field

from .polycore import (MonomialBasis, Polynomial, SemialgebraicDescription,
                       add_exponents)


@dataclass(frozen=True)
class QuadraticModuleTruncation:
    """Q(g)[D] with the implicit multiplier g_0 = 1.

    Generator i contributes sigma_i * g_i with sigma_i = v_i' X_i v_i, where
    v_i lists the monomials of degree <= floor((D - deg g_i) / 2). Generators
    of degree > D are left out; ``generator_index`` maps blocks back to
    positions in g (0 is the implicit constant).
    """

    g: SemialgebraicDescription
    D: int
    generators: tuple = field(init=False)
    generator_index: tuple = field(init=False)
    multiplier_degrees: tuple = field(init=False)
    bases: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.D < 0:
            raise ValueError("truncation degree must be >= 0")
        n = self.g.n
        gens, idx, degs = [Polynomial.constant(n, 1)], [0], [self.D // 2]
        for i, gi in enumerate(self.g.g, start=1):
            if gi.is_zero() or gi.degree() > self.D:
                continue
            gens.append(gi)
            idx.append(i)
            degs.append((self.D - int(gi.degree())) // 2)
        object.__setattr__(self, "generators", tuple(gens))
        object.__setattr__(self, "generator_index", tuple(idx))
        object.__setattr__(self, "multiplier_degrees", tuple(degs))
        object.__setattr__(self, "bases", tuple(MonomialBasis(n, dl) for dl in degs))

    @property
    def n(self) -> int:
        return self.g.n

    @property
    def gram_sides(self) -> tuple:
        return tuple(len(b) for b in self.bases)

    def gram_terms(self, block: int) -> dict:
        """beta -> list of ((j, k), coeff) with j <= k such that
        [x^beta](v' X v g) = sum coeff * X[j, k]."""
        basis = self.bases[block]
        gen = self.generators[block]
        out: dict = {}
        exps = basis.exponents
        for j, ej in enumerate(exps):
            for k in range(j, len(exps)):
                ejk = add_exponents(ej, exps[k])
                mult = 1 if j == k else 2
                for e, c in gen.items():
                    beta = add_exponents(ejk, e)
                    out.setdefault(beta, []).append(((j, k), mult * c))
        return out

    def sos_times_generator(self, block: int, X) -> Polynomial:
        """v' X v * g_block as a polynomial (exact for Fraction entries)."""
        acc: dict = {}
        for beta, terms in self.gram_terms(block).items():
            s = 0
            for (j, k), c in terms:
                s = s + c * X[j][k]
            acc[beta] = s
        return Polynomial(self.n, acc)

    def combine(self, grams) -> Polynomial:
        """sum_i v_i' X_i v_i g_i."""
        total = Polynomial(self.n)
        for blk, X in enumerate(grams):
            total = total + self.sos_times_generator(blk, X)
        return total

    def sos_polynomial(self, block: int, X) -> Polynomial:
        basis = self.bases[block]
        exps = basis.exponents
        acc: dict = {}
        for j, ej in enumerate(exps):
            for k, ek in enumerate(exps):
                e = add_exponents(ej, ek)
                acc[e] = acc.get(e, 0) + X[j][k]
        return Polynomial(self.n, acc)


@dataclass
class Certificate:
    """p with L_y(p) = 0 and p = 1 + sum_i v_i' X_i v_i g_i, X_i PSD."""

    p: Polynomial
    grams: list
    D: int
    margin: float
    g: SemialgebraicDescription
    support: tuple | None = None    # Gram indices left free; others are zero

    @property
    def truncation(self) -> QuadraticModuleTruncation:
        return QuadraticModuleTruncation(self.g, self.D)

    def identity_residual(self) -> Polynomial:
        """p - 1 - sum sigma_i g_i (zero for a valid certificate)."""
        return self.p - 1 - self.truncation.combine(self.grams)
