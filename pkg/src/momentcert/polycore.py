"""Monomials, sparse polynomials, moment vectors and moment/localizing matrices.

Exponents are plain tuples of nonnegative ints. All monomial bases use the
graded lexicographic order with x1 > x2 > ... > xn, so that
``MonomialBasis(n, d - 1)`` is a prefix of ``MonomialBasis(n, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from numbers import Number
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponent = tuple

# degree of the zero polynomial
ZERO_DEGREE = -math.inf


class ExponentOutOfRange(ValueError):
    pass


class DegreeMismatch(ValueError):
    pass


class NonPositiveWeight(ValueError):
    pass


def total_degree(e: Exponent) -> int:
    return sum(e)


def num_monomials(n: int, d: int) -> int:
    """Number of exponents in N^n with total degree <= d."""
    if d < 0:
        return 0
    return math.comb(n + d, d)


def _graded_exponents(n: int, deg: int):
    # all exponents of total degree exactly deg, lex descending
    if n == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _graded_exponents(n - 1, deg - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _exponent_table(n: int, d: int) -> tuple:
    out = []
    for deg in range(d + 1):
        out.extend(_graded_exponents(n, deg))
    return tuple(out)


@dataclass(frozen=True)
class MonomialBasis:
    n: int
    d: int
    exponents: tuple = field(init=False, repr=False, compare=False)
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one variable")
        if self.d < 0:
            raise ValueError("truncation degree must be >= 0")
        table = _exponent_table(self.n, self.d)
        object.__setattr__(self, "exponents", table)
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(table)})

    def __len__(self) -> int:
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def index_of(self, e: Sequence[int]) -> int:
        e = tuple(int(a) for a in e)
        if len(e) != self.n or any(a < 0 for a in e):
            raise ExponentOutOfRange(f"exponent {e} does not have {self.n} nonnegative entries")
        if sum(e) > self.d:
            raise ExponentOutOfRange(f"exponent {e} has degree {sum(e)} > {self.d}")
        return self._index[e]

    def exponent_of(self, i: int) -> Exponent:
        if not 0 <= i < len(self.exponents):
            raise ExponentOutOfRange(f"index {i} outside [0, {len(self.exponents)})")
        return self.exponents[i]

    def __contains__(self, e) -> bool:
        return tuple(e) in self._index


def index_of(basis: MonomialBasis, e: Sequence[int]) -> int:
    return basis.index_of(e)


def exponent_of(basis: MonomialBasis, i: int) -> Exponent:
    return basis.exponent_of(i)


def add_exponents(a: Exponent, b: Exponent) -> Exponent:
    return tuple(x + y for x, y in zip(a, b))


def _is_zero(c) -> bool:
    return c == 0


class Polynomial:
    """Sparse polynomial: a mapping exponent tuple -> coefficient.

    Coefficients may be floats or Fractions; zero coefficients are never
    stored. Instances are treated as immutable.
    """

    __slots__ = ("n", "_coeffs")

    def __init__(self, n: int, coeffs: Mapping | None = None):
        self.n = int(n)
        clean = {}
        for e, c in (coeffs or {}).items():
            e = tuple(int(a) for a in e)
            if len(e) != self.n or any(a < 0 for a in e):
                raise ExponentOutOfRange(f"exponent {e} invalid for n={self.n}")
            if not _is_zero(c):
                clean[e] = clean.get(e, 0) + c
        self._coeffs = {e: c for e, c in clean.items() if not _is_zero(c)}

    @classmethod
    def constant(cls, n: int, c) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def monomial(cls, e: Sequence[int], c=1) -> "Polynomial":
        return cls(len(e), {tuple(e): c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): 1})

    @classmethod
    def from_dense(cls, basis: MonomialBasis, values: Sequence) -> "Polynomial":
        return cls(basis.n, {e: v for e, v in zip(basis.exponents, values)})

    @property
    def coeffs(self) -> dict:
        return dict(self._coeffs)

    def items(self):
        return self._coeffs.items()

    def coeff(self, e: Sequence[int]):
        return self._coeffs.get(tuple(e), 0)

    def degree(self):
        if not self._coeffs:
            return ZERO_DEGREE
        return max(sum(e) for e in self._coeffs)

    def is_zero(self) -> bool:
        return not self._coeffs

    def to_dense(self, basis: MonomialBasis, dtype=float):
        if self.degree() > basis.d:
            raise DegreeMismatch(f"degree {self.degree()} exceeds basis degree {basis.d}")
        if dtype is Fraction:
            out = [Fraction(0)] * len(basis)
            for e, c in self._coeffs.items():
                out[basis.index_of(e)] = Fraction(c)
            return out
        out = np.zeros(len(basis), dtype=dtype)
        for e, c in self._coeffs.items():
            out[basis.index_of(e)] = c
        return out

    def to_float(self) -> "Polynomial":
        return Polynomial(self.n, {e: float(c) for e, c in self._coeffs.items()})

    def to_rational(self, max_den: int | None = None) -> "Polynomial":
        if max_den is None:
            return Polynomial(self.n, {e: Fraction(c) for e, c in self._coeffs.items()})
        return Polynomial(self.n, {e: Fraction(c).limit_denominator(max_den)
                                   for e, c in self._coeffs.items()})

    def is_rational(self) -> bool:
        return all(isinstance(c, (int, Fraction)) for c in self._coeffs.values())

    def __call__(self, point: Sequence):
        total = 0
        for e, c in self._coeffs.items():
            term = c
            for xi, a in zip(point, e):
                if a:
                    term = term * xi ** a
            total = total + term
        return total

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for e, c in self._coeffs.items():
            out += float(c) * np.prod(pts ** np.asarray(e), axis=1)
        return out

    def gradient(self) -> list:
        grads = []
        for i in range(self.n):
            g = {}
            for e, c in self._coeffs.items():
                if e[i]:
                    f = list(e)
                    f[i] -= 1
                    g[tuple(f)] = c * e[i]
            grads.append(Polynomial(self.n, g))
        return grads

    def _check(self, other: "Polynomial"):
        if self.n != other.n:
            raise ValueError(f"variable count mismatch: {self.n} vs {other.n}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, Number):
            return Polynomial.constant(self.n, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._coeffs)
        for e, c in other._coeffs.items():
            out[e] = out.get(e, 0) + c
        return Polynomial(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {e: -c for e, c in self._coeffs.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return Polynomial(self.n, {e: c * other for e, c in self._coeffs.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = {}
        for e1, c1 in self._coeffs.items():
            for e2, c2 in other._coeffs.items():
                e = add_exponents(e1, e2)
                out[e] = out.get(e, 0) + c1 * c2
        return Polynomial(self.n, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, Number):
            other = Polynomial.constant(self.n, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and self._coeffs == other._coeffs

    def __hash__(self):
        return hash((self.n, frozenset(self._coeffs.items())))

    def __repr__(self):
        if not self._coeffs:
            return "Polynomial(0)"
        terms = []
        for e in sorted(self._coeffs, key=lambda e: (sum(e), tuple(-a for a in e))):
            c = self._coeffs[e]
            mono = "*".join(f"x{i + 1}^{a}" if a > 1 else f"x{i + 1}"
                            for i, a in enumerate(e) if a)
            terms.append(f"{c}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(terms) + ")"


@dataclass(frozen=True)
class SemialgebraicDescription:
    """K = {x : g_i(x) >= 0 for all i}; an empty list means K = R^n."""

    n: int
    g: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "g", tuple(self.g))
        for gi in self.g:
            if gi.n != self.n:
                raise ValueError("all constraint polynomials must share n")

    @property
    def k(self) -> int:
        return len(self.g)

    @property
    def max_degree(self) -> int:
        return max((int(gi.degree()) for gi in self.g if not gi.is_zero()), default=0)

    def contains(self, point, tol: float = 0.0) -> bool:
        return all(float(gi(point)) >= -tol for gi in self.g)

    def slack(self, point) -> float:
        """min_j g_j(point); +inf when there are no constraints."""
        return min((float(gi(point)) for gi in self.g), default=math.inf)

    def has_ball_constraint(self) -> bool:
        """True if some g_i has the form R - sum x_i^2 with R > 0."""
        for gi in self.g:
            c = gi.coeffs
            const = c.pop((0,) * self.n, 0)
            squares = {tuple(2 if j == i else 0 for j in range(self.n)) for i in range(self.n)}
            if const > 0 and set(c) == squares and all(v == -1 for v in c.values()):
                return True
        return False

    def is_flagged_noncompact(self) -> bool:
        return self.k == 0


@dataclass(frozen=True)
class MomentVector:
    """Truncated moment sequence y indexed by the graded-lex basis of N^n_d."""

    n: int
    d: int
    values: tuple

    def __post_init__(self):
        vals = tuple(self.values)
        if len(vals) != num_monomials(self.n, self.d):
            raise ValueError(
                f"expected {num_monomials(self.n, self.d)} moments for n={self.n}, d={self.d}, got {len(vals)}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_map(cls, n: int, d: int, entries: Mapping) -> "MomentVector":
        basis = MonomialBasis(n, d)
        vals = [0] * len(basis)
        for e, v in entries.items():
            vals[basis.index_of(e)] = v
        return cls(n, d, tuple(vals))

    @property
    def basis(self) -> MonomialBasis:
        return MonomialBasis(self.n, self.d)

    @property
    def y0(self):
        return self.values[0]

    def __getitem__(self, e):
        return self.values[self.basis.index_of(e)]

    def is_rational(self) -> bool:
        return all(isinstance(v, (int, Fraction)) for v in self.values)

    def as_array(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])

    def to_float(self) -> "MomentVector":
        return MomentVector(self.n, self.d, tuple(float(v) for v in self.values))

    def to_rational(self) -> "MomentVector":
        return MomentVector(self.n, self.d, tuple(Fraction(v) for v in self.values))


def riesz_apply(y: MomentVector, p: Polynomial):
    """L_y(p) = sum_a p_a y_a."""
    if p.n != y.n:
        raise DegreeMismatch(f"polynomial has n={p.n}, moments have n={y.n}")
    if p.degree() > y.d:
        raise DegreeMismatch(f"polynomial degree {p.degree()} exceeds moment degree {y.d}")
    basis = y.basis
    total = 0
    for e, c in p.items():
        total = total + c * y.values[basis.index_of(e)]
    return total


def _matrix(entries, rational: bool):
    if rational:
        return [list(row) for row in entries]
    return np.array(entries, dtype=float)


def moment_matrix(y: MomentVector, order: int):
    """M_order(y)[i, j] = y_{a_i + a_j}. Returns nested lists of Fractions for
    rational y, a float ndarray otherwise."""
    if 2 * order > y.d:
        raise DegreeMismatch(f"moment matrix of order {order} needs degree {2 * order} > {y.d}")
    basis = y.basis
    rows = MonomialBasis(y.n, order).exponents
    entries = [[y.values[basis.index_of(add_exponents(a, b))] for b in rows] for a in rows]
    return _matrix(entries, y.is_rational())


def localizing_matrix(y: MomentVector, g: Polynomial, order: int):
    """M_order(g y)[i, j] = L_y(g x^{a_i + a_j})."""
    if g.n != y.n:
        raise DegreeMismatch("constraint and moments disagree on n")
    gdeg = 0 if g.is_zero() else g.degree()
    if 2 * order + gdeg > y.d:
        raise DegreeMismatch(f"localizing matrix needs degree {2 * order + gdeg} > {y.d}")
    basis = y.basis
    rows = MonomialBasis(y.n, order).exponents
    entries = []
    for a in rows:
        row = []
        for b in rows:
            ab = add_exponents(a, b)
            s = 0
            for e, c in g.items():
                s = s + c * y.values[basis.index_of(add_exponents(ab, e))]
            row.append(s)
        entries.append(row)
    return _matrix(entries, y.is_rational())


def moments_of_atomic_measure(atoms: Iterable, n: int, d: int) -> MomentVector:
    """Moments of sum_i c_i delta_{u_i}; ``atoms`` yields (weight, point) pairs.

    Exact when weights and coordinates are Fractions/ints."""
    atoms = list(atoms)
    basis = MonomialBasis(n, d)
    vals = [0] * len(basis)
    for c, u in atoms:
        if not c > 0:
            raise NonPositiveWeight(f"weight {c} is not positive")
        u = tuple(u)
        if len(u) != n:
            raise ValueError(f"atom {u} does not have {n} coordinates")
        for i, e in enumerate(basis.exponents):
            term = c
            for ui, a in zip(u, e):
                if a:
                    term = term * ui ** a
            vals[i] = vals[i] + term
    return MomentVector(n, d, tuple(vals))


def bit_size(q) -> int:
    """bitlen(|num|) + bitlen(den) of a reduced rational."""
    q = Fraction(q)
    return abs(q.numerator).bit_length() + q.denominator.bit_length()


@dataclass(frozen=True)
class InputStats:
    N: int
    tau_y: int
    tau_g: int
    tau: int
    delta: int
    d_g: int


def input_stats(y: MomentVector, g: SemialgebraicDescription, d: int | None = None) -> InputStats:
    """Problem-size statistics: N = C(n+d, d), bit sizes of y and g, and
    tau = max((N+1) tau_y, C(n+d_g, n) tau_g), delta = max(d+1, d_g)."""
    d = y.d if d is None else d
    n = y.n
    N = num_monomials(n, d)
    tau_y = max((bit_size(v) for v in y.values), default=0)
    coeffs = [c for gi in g.g for _, c in gi.items()]
    tau_g = max((bit_size(c) for c in coeffs), default=0)
    d_g = g.max_degree
    tau = max((N + 1) * tau_y, math.comb(n + d_g, n) * tau_g)
    return InputStats(N=N, tau_y=tau_y, tau_g=tau_g, tau=tau, delta=max(d + 1, d_g), d_g=d_g)
