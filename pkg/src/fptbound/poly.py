"""Sparse multivariate polynomials with exact rational coefficients.

Variable 0 is time by convention; species variables follow in model order.
Terms are kept in a dict mapping exponent tuples to ``Fraction`` coefficients
and never store zeros, so two polynomials are equal iff their term maps are.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb, factorial
from numbers import Rational
from typing import Iterable, Mapping, Sequence

Exponent = tuple[int, ...]


def as_fraction(value) -> Fraction:
    """Exact rational for ``value``; floats go through their shortest repr."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def grlex_key(exps: Exponent) -> tuple:
    """Sort key: total degree first, then lexicographic with earlier variables larger."""
    return (sum(exps), tuple(-e for e in exps))


def monomials_upto(nvars: int, degree: int) -> list[Exponent]:
    """All exponents of total degree <= ``degree`` in graded-lex order."""
    out: list[Exponent] = []
    for d in range(degree + 1):
        out.extend(_monomials_of_degree(nvars, d))
    return out


def _monomials_of_degree(nvars: int, d: int) -> list[Exponent]:
    if nvars == 0:
        return [()] if d == 0 else []
    if nvars == 1:
        return [(d,)]
    out = []
    for first in range(d, -1, -1):
        for rest in _monomials_of_degree(nvars - 1, d - first):
            out.append((first,) + rest)
    return out


class Polynomial:
    __slots__ = ("nvars", "_terms")

    def __init__(self, nvars: int, terms: Mapping[Exponent, object] | None = None):
        self.nvars = nvars
        clean: dict[Exponent, Fraction] = {}
        for exps, coeff in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent {exps} does not have {nvars} entries")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            c = as_fraction(coeff)
            if c:
                clean[exps] = clean.get(exps, Fraction(0)) + c
                if not clean[exps]:
                    del clean[exps]
        self._terms = clean

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def monomial(cls, exps: Sequence[int], coeff=1) -> "Polynomial":
        return cls(len(exps), {tuple(exps): coeff})

    @classmethod
    def variable(cls, nvars: int, index: int) -> "Polynomial":
        exps = [0] * nvars
        exps[index] = 1
        return cls(nvars, {tuple(exps): 1})

    @classmethod
    def _raw(cls, nvars: int, terms: dict[Exponent, Fraction]) -> "Polynomial":
        p = cls.__new__(cls)
        p.nvars = nvars
        p._terms = terms
        return p

    # -- inspection -------------------------------------------------------

    @property
    def terms(self) -> dict[Exponent, Fraction]:
        return dict(self._terms)

    def items(self):
        """(exponent, coefficient) pairs in graded-lex order."""
        return sorted(self._terms.items(), key=lambda kv: grlex_key(kv[0]))

    def coefficient(self, exps: Sequence[int]) -> Fraction:
        return self._terms.get(tuple(exps), Fraction(0))

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self._terms), default=-1)

    def degree_in(self, index: int) -> int:
        return max((e[index] for e in self._terms), default=-1)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, Polynomial):
            return self.nvars == other.nvars and self._terms == other._terms
        if isinstance(other, (int, float, Fraction)):
            return self == Polynomial.constant(self.nvars, other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.nvars, frozenset(self._terms.items())))

    def __repr__(self) -> str:
        return f"Polynomial({self.nvars}, {self.to_string()!r})"

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError(f"arity mismatch: {self.nvars} vs {other.nvars}")
            return other
        return Polynomial.constant(self.nvars, other)

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        out = dict(self._terms)
        for e, c in other._terms.items():
            s = out.get(e, 0) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return Polynomial._raw(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._raw(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            return self.scale(other)
        other = self._coerce(other)
        out: dict[Exponent, Fraction] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(e, 0) + c1 * c2
                if s:
                    out[e] = s
                else:
                    out.pop(e, None)
        return Polynomial._raw(self.nvars, out)

    def __rmul__(self, other) -> "Polynomial":
        return self.scale(other)

    def __pow__(self, n: int) -> "Polynomial":
        if not isinstance(n, int) or n < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = Polynomial.constant(self.nvars, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def scale(self, c) -> "Polynomial":
        c = as_fraction(c)
        if not c:
            return Polynomial.zero(self.nvars)
        return Polynomial._raw(self.nvars, {e: v * c for e, v in self._terms.items()})

    # -- substitutions ----------------------------------------------------

    def shift(self, v: Sequence[int]) -> "Polynomial":
        """Compose with x -> x + v.

        ``v`` may list every variable or only the species (time then stays put).
        """
        v = list(v)
        if len(v) == self.nvars - 1:
            v = [0] + v
        if len(v) != self.nvars:
            raise ValueError(f"shift vector has {len(v)} entries, expected {self.nvars - 1}")
        if not any(v):
            return self
        out = Polynomial.zero(self.nvars)
        for exps, coeff in self._terms.items():
            term = Polynomial.constant(self.nvars, coeff)
            for i, (e, vi) in enumerate(zip(exps, v)):
                if e == 0:
                    continue
                if vi == 0:
                    mono = [0] * self.nvars
                    mono[i] = e
                    term = term * Polynomial._raw(self.nvars, {tuple(mono): Fraction(1)})
                    continue
                # (x + vi)^e expanded by the binomial theorem
                factor = {}
                for p in range(e + 1):
                    mono = [0] * self.nvars
                    mono[i] = p
                    factor[tuple(mono)] = Fraction(comb(e, p) * vi ** (e - p))
                term = term * Polynomial._raw(self.nvars, factor)
            out = out + term
        return out

    def substitute(self, index: int, value) -> "Polynomial":
        """Fix variable ``index`` to ``value``; arity is unchanged (exponent becomes 0)."""
        value = as_fraction(value)
        out: dict[Exponent, Fraction] = {}
        for exps, coeff in self._terms.items():
            c = coeff * value ** exps[index] if exps[index] else coeff
            if not c:
                continue
            e = exps[:index] + (0,) + exps[index + 1:]
            s = out.get(e, 0) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return Polynomial._raw(self.nvars, out)

    def project(self, keep: Sequence[int]) -> "Polynomial":
        """Re-express over the variables ``keep`` (in that order).

        Every dropped variable must have exponent zero in every term.
        """
        keep = list(keep)
        dropped = [i for i in range(self.nvars) if i not in keep]
        out = {}
        for exps, c in self._terms.items():
            if any(exps[i] for i in dropped):
                raise ValueError("cannot drop a variable the polynomial depends on")
            out[tuple(exps[i] for i in keep)] = c
        return Polynomial._raw(len(keep), out)

    def embed(self, nvars: int, positions: Sequence[int]) -> "Polynomial":
        """Inverse of :meth:`project`: place variable i at ``positions[i]``."""
        out = {}
        for exps, c in self._terms.items():
            e = [0] * nvars
            for i, p in enumerate(positions):
                e[p] += exps[i]
            out[tuple(e)] = c
        return Polynomial(nvars, out)

    # -- evaluation -------------------------------------------------------

    def evaluate(self, point: Sequence[float]) -> float:
        if len(point) != self.nvars:
            raise ValueError(f"point has {len(point)} entries, expected {self.nvars}")
        if not self._terms:
            return 0.0
        # Horner over the first variable, recursing on the rest
        return float(_horner(self.items(), list(point), 0))

    def evaluate_exact(self, point: Sequence) -> Fraction:
        if len(point) != self.nvars:
            raise ValueError(f"point has {len(point)} entries, expected {self.nvars}")
        if not self._terms:
            return Fraction(0)
        return _horner(self.items(), [as_fraction(x) for x in point], 0)

    def float_terms(self) -> dict[Exponent, float]:
        return {e: float(c) for e, c in self.items()}

    # -- printing ---------------------------------------------------------

    def to_string(self, names: Sequence[str] | None = None, mul: str = " * ") -> str:
        """Human readable ``c * t^k * M^a`` form, terms in graded-lex order."""
        if names is None:
            names = ["t"] + [f"x{i}" for i in range(1, self.nvars)]
        if not self._terms:
            return "0"
        parts = []
        for exps, c in self.items():
            factors = []
            for name, e in zip(names, exps):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mag = abs(c)
            coeff = format_number(mag)
            if factors:
                body = mul.join(([coeff] if mag != 1 else []) + factors)
            else:
                body = coeff
            parts.append(("-" if c < 0 else "+", body))
        head_sign, head = parts[0]
        text = ("-" if head_sign == "-" else "") + head
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __str__(self) -> str:
        return self.to_string()


def _horner(items: list, point: list, var: int):
    """Nested Horner evaluation of sorted (exps, coeff) items from variable ``var`` on."""
    if var == len(point):
        return sum(c for _, c in items)
    groups: dict[int, list] = {}
    for exps, c in items:
        groups.setdefault(exps[var], []).append((exps, c))
    acc = 0
    x = point[var]
    top = max(groups)
    for power in range(top, -1, -1):
        acc = acc * x
        if power in groups:
            acc = acc + _horner(groups[power], point, var + 1)
    return acc


def format_number(c: Fraction) -> str:
    """Decimal text when the rational is a terminating decimal, ``p/q`` otherwise."""
    c = as_fraction(c)
    if c.denominator == 1:
        return str(c.numerator)
    d = c.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d != 1:
        return f"{c.numerator}/{c.denominator}"
    digits = 0
    scaled = c
    while scaled.denominator != 1:
        scaled *= 10
        digits += 1
    sign = "-" if scaled < 0 else ""
    s = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def falling_binomial(nvars: int, index: int, k: int) -> Polynomial:
    """binom(x_index, k) = x(x-1)...(x-k+1)/k! as a polynomial."""
    out = Polynomial.constant(nvars, 1)
    x = Polynomial.variable(nvars, index)
    for j in range(k):
        out = out * (x - j)
    return out.scale(Fraction(1, factorial(k)))


def sum_polys(nvars: int, polys: Iterable[Polynomial]) -> Polynomial:
    out = Polynomial.zero(nvars)
    for p in polys:
        out = out + p
    return out
