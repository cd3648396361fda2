"""Exact symbolic algebra for the moment engine.

Two value families live here:

* :class:`Poly` -- multivariate polynomials over named symbols with exact
  rational coefficients, kept in a canonical expanded normal form.  Program
  variables, parameters and symbolic initial values (``y(0)``) are all just
  symbols; which symbol plays which role is decided by the frontend.
* :class:`ExpPoly` -- exponential polynomials in the loop counter ``n``:
  finite sums of ``coeff * base**n * n**degree`` where ``coeff`` and ``base``
  are :class:`Poly` values constant in ``n``.

Everything is immutable and hashable; arithmetic never leaves the exact
rational world.  There is deliberately no factorization, GCD or
simplification beyond the expanded normal form.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Union

# A monomial maps symbol names to positive integer exponents, stored as a
# tuple sorted by name so it can key dicts.
Mono = tuple[tuple[str, int], ...]

_ONE_MONO: Mono = ()

Scalar = Union[int, Fraction]


class SymbolicError(Exception):
    """Base class for errors raised by the symbolic layer."""


class UnboundSymbolError(SymbolicError):
    """Evaluation met a symbol with no binding."""

    def __init__(self, name: str):
        super().__init__(f"no binding for symbol {name!r}")
        self.name = name


def _mono_mul(a: Mono, b: Mono) -> Mono:
    if not a:
        return b
    if not b:
        return a
    merged: dict[str, int] = dict(a)
    for name, exp in b:
        merged[name] = merged.get(name, 0) + exp
    return tuple(sorted(merged.items()))


def _mono_pow(a: Mono, k: int) -> Mono:
    if k == 0 or not a:
        return _ONE_MONO
    return tuple((name, exp * k) for name, exp in a)


def _mono_degree(a: Mono) -> int:
    return sum(exp for _, exp in a)


def _grlex_key(mono: Mono, symbols: tuple[str, ...]) -> tuple:
    # Graded lexicographic: total degree first, then the exponent vector
    # over the given (sorted) symbol universe.
    exps = dict(mono)
    return (_mono_degree(mono), tuple(exps.get(s, 0) for s in symbols))


class Poly:
    """Immutable multivariate polynomial with Fraction coefficients.

    The normal form stores no zero coefficients and keeps each monomial's
    symbol list sorted, so structural equality is algebraic equality.
    """

    __slots__ = ("_terms", "_hash")

    _terms: dict[Mono, Fraction]

    def __init__(self, terms: Mapping[Mono, Scalar] | None = None):
        clean: dict[Mono, Fraction] = {}
        if terms:
            for mono, coeff in terms.items():
                q = Fraction(coeff)
                if q:
                    clean[mono] = q
        self._terms = clean
        self._hash: int | None = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def const(cls, value: Scalar) -> "Poly":
        return cls({_ONE_MONO: Fraction(value)})

    @classmethod
    def var(cls, name: str) -> "Poly":
        return cls({((name, 1),): Fraction(1)})

    @classmethod
    def monomial(cls, powers: Mapping[str, int], coeff: Scalar = 1) -> "Poly":
        mono = tuple(sorted((n, e) for n, e in powers.items() if e))
        return cls({mono: Fraction(coeff)})

    # -- predicates and views ----------------------------------------------

    def is_zero(self) -> bool:
        return not self._terms

    def is_const(self) -> bool:
        return not self._terms or (len(self._terms) == 1 and _ONE_MONO in self._terms)

    def const_value(self) -> Fraction:
        """The value of a constant polynomial; raises if symbols remain."""
        if self.is_zero():
            return Fraction(0)
        if not self.is_const():
            raise SymbolicError(f"{self} is not a constant")
        return self._terms[_ONE_MONO]

    def symbols(self) -> set[str]:
        return {name for mono in self._terms for name, _ in mono}

    def total_degree(self) -> int:
        return max((_mono_degree(m) for m in self._terms), default=0)

    def degree_in(self, name: str) -> int:
        deg = 0
        for mono in self._terms:
            for sym, exp in mono:
                if sym == name:
                    deg = max(deg, exp)
        return deg

    def terms(self) -> Iterator[tuple[Mono, Fraction]]:
        return iter(self._terms.items())

    def sorted_terms(self) -> list[tuple[Mono, Fraction]]:
        """Terms in descending graded-lex order; the canonical print order."""
        universe = tuple(sorted(self.symbols()))
        return sorted(
            self._terms.items(),
            key=lambda item: _grlex_key(item[0], universe),
            reverse=True,
        )

    def coefficients_by_power(self, name: str) -> dict[int, "Poly"]:
        """Split into { d : poly } with self == sum poly_d * name**d."""
        buckets: dict[int, dict[Mono, Fraction]] = {}
        for mono, coeff in self._terms.items():
            exp = 0
            rest = []
            for sym, e in mono:
                if sym == name:
                    exp = e
                else:
                    rest.append((sym, e))
            buckets.setdefault(exp, {})[tuple(rest)] = coeff
        return {d: Poly(t) for d, t in buckets.items()}

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> "Poly | None":
        if isinstance(other, Poly):
            return other
        if isinstance(other, (int, Fraction)):
            return Poly.const(other)
        return None

    def __add__(self, other) -> "Poly":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        terms = dict(self._terms)
        for mono, coeff in o._terms.items():
            terms[mono] = terms.get(mono, Fraction(0)) + coeff
        return Poly(terms)

    __radd__ = __add__

    def __sub__(self, other) -> "Poly":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other) -> "Poly":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self._terms.items()})

    def __mul__(self, other) -> "Poly":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if not self._terms or not o._terms:
            return Poly()
        terms: dict[Mono, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in o._terms.items():
                mono = _mono_mul(m1, m2)
                terms[mono] = terms.get(mono, Fraction(0)) + c1 * c2
        return Poly(terms)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Poly":
        # Exact division by a nonzero rational only; polynomial divisors go
        # through exact_div so callers must handle failure explicitly.
        if isinstance(other, (int, Fraction)):
            q = Fraction(other)
            if not q:
                raise ZeroDivisionError("division of polynomial by zero")
            return self * (1 / q)
        return NotImplemented

    def __pow__(self, k: int) -> "Poly":
        if not isinstance(k, int) or k < 0:
            raise ValueError("polynomial powers must be nonnegative integers")
        result = Poly.const(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self._terms == o._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # -- substitution, evaluation, division ---------------------------------

    def substitute(self, name: str, replacement: "Poly") -> "Poly":
        """Replace every occurrence of ``name``; the result is expanded."""
        if name not in self.symbols():
            return self
        powers: dict[int, Poly] = {0: Poly.const(1)}

        def rep_pow(k: int) -> Poly:
            if k not in powers:
                powers[k] = rep_pow(k - 1) * replacement
            return powers[k]

        out = Poly()
        for mono, coeff in self._terms.items():
            exp = 0
            rest = []
            for sym, e in mono:
                if sym == name:
                    exp = e
                else:
                    rest.append((sym, e))
            piece = Poly({tuple(rest): coeff})
            if exp:
                piece = piece * rep_pow(exp)
            out = out + piece
        return out

    def evaluate(self, bindings: Mapping[str, Scalar]) -> Fraction:
        """Exact value under a full binding of the symbols."""
        total = Fraction(0)
        for mono, coeff in self._terms.items():
            value = coeff
            for sym, exp in mono:
                if sym not in bindings:
                    raise UnboundSymbolError(sym)
                value *= Fraction(bindings[sym]) ** exp
            total += value
        return total

    def exact_div(self, divisor: "Poly") -> "Poly | None":
        """Exact polynomial quotient, or None when the division has a remainder.

        Multivariate long division against the graded-lex leading term; the
        quotient is returned only when it is exact.
        """
        if divisor.is_zero():
            raise ZeroDivisionError("division of polynomial by zero")
        if divisor.is_const():
            return self / divisor.const_value()
        universe = tuple(sorted(self.symbols() | divisor.symbols()))

        def leading(p: Poly) -> tuple[Mono, Fraction]:
            mono = max(p._terms, key=lambda m: _grlex_key(m, universe))
            return mono, p._terms[mono]

        quotient = Poly()
        rem = self
        lead_d, coeff_d = leading(divisor)
        d_exps = dict(lead_d)
        while not rem.is_zero():
            lead_r, coeff_r = leading(rem)
            r_exps = dict(lead_r)
            exps = {s: r_exps.get(s, 0) - d_exps.get(s, 0) for s in set(r_exps) | set(d_exps)}
            if any(e < 0 for e in exps.values()):
                return None
            factor = Poly(
                {tuple(sorted((s, e) for s, e in exps.items() if e)): coeff_r / coeff_d}
            )
            quotient = quotient + factor
            rem = rem - factor * divisor
        return quotient

    # -- rendering -----------------------------------------------------------

    def __str__(self) -> str:
        return render_sum(
            [(coeff, mono, 0, None) for mono, coeff in self.sorted_terms()]
        )

    def __repr__(self) -> str:
        return f"Poly({self})"


ZERO = Poly()
ONE = Poly.const(1)


@dataclass(frozen=True)
class Moment:
    """A monomial over program variables whose expected value is tracked.

    ``Moment((("x", 2), ("y", 1)))`` stands for the sequence
    ``E[x(n)^2 * y(n)]``.  Variables are kept sorted so the rendering
    ``x^2*y^1`` is canonical.
    """

    powers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not self.powers:
            raise ValueError("a tracked moment needs at least one variable")
        if any(e < 1 for _, e in self.powers):
            raise ValueError("moment exponents must be positive")
        ordered = tuple(sorted(self.powers))
        object.__setattr__(self, "powers", ordered)

    @classmethod
    def of(cls, powers: Mapping[str, int]) -> "Moment":
        return cls(tuple(sorted((v, e) for v, e in powers.items() if e)))

    @classmethod
    def single(cls, var: str, exp: int = 1) -> "Moment":
        return cls(((var, exp),))

    _TOKEN = re.compile(r"^([A-Za-z][A-Za-z0-9]*(?:\(0\))?)(?:\^(\d+))?$")

    @classmethod
    def parse(cls, text: str) -> "Moment":
        """Parse goal syntax like ``x^2*y`` (an omitted exponent means 1)."""
        powers: dict[str, int] = {}
        for chunk in text.split("*"):
            m = cls._TOKEN.match(chunk.strip())
            if m is None:
                raise ValueError(f"bad monomial syntax: {text!r}")
            exp = int(m.group(2)) if m.group(2) else 1
            if exp < 1:
                raise ValueError(f"exponents must be >= 1 in {text!r}")
            name = m.group(1)
            powers[name] = powers.get(name, 0) + exp
        return cls.of(powers)

    def degree(self) -> int:
        return sum(e for _, e in self.powers)

    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.powers)

    def as_poly(self) -> Poly:
        return Poly.monomial(dict(self.powers))

    def sort_key(self) -> tuple:
        return (self.degree(), self.powers)

    def __str__(self) -> str:
        return "*".join(f"{v}^{e}" for v, e in self.powers)


class ExpPoly:
    """Finite sum of ``coeff * base**n * n**degree`` terms.

    Keys are (base, degree) pairs with the base compared by polynomial
    normal form; the coefficient of each key is a :class:`Poly`.  The
    convention ``0**0 == 1`` makes a base-0 term an indicator of ``n == 0``,
    which is how one-point initial corrections are represented.
    """

    __slots__ = ("_terms",)

    _terms: dict[tuple[Poly, int], Poly]

    def __init__(self, terms: Mapping[tuple[Poly, int], Poly] | None = None):
        clean: dict[tuple[Poly, int], Poly] = {}
        if terms:
            for (base, degree), coeff in terms.items():
                if not coeff.is_zero():
                    clean[(base, degree)] = coeff
        self._terms = clean

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls) -> "ExpPoly":
        return cls()

    @classmethod
    def const(cls, value: Poly | Scalar) -> "ExpPoly":
        poly = value if isinstance(value, Poly) else Poly.const(value)
        return cls({(ONE, 0): poly})

    @classmethod
    def term(cls, coeff: Poly | Scalar, base: Poly | Scalar, degree: int = 0) -> "ExpPoly":
        coeff_p = coeff if isinstance(coeff, Poly) else Poly.const(coeff)
        base_p = base if isinstance(base, Poly) else Poly.const(base)
        return cls({(base_p, degree): coeff_p})

    # -- views ----------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self._terms

    def terms(self) -> Iterator[tuple[Poly, int, Poly]]:
        for (base, degree), coeff in self._terms.items():
            yield base, degree, coeff

    def sorted_terms(self) -> list[tuple[Poly, int, Poly]]:
        def key(item):
            (base, degree), _ = item
            if base.is_const():
                base_key = (0, base.const_value(), "")
            else:
                base_key = (1, Fraction(0), str(base))
            return (base_key, degree)

        ordered = sorted(self._terms.items(), key=key, reverse=True)
        return [(b, d, c) for (b, d), c in ordered]

    def by_base(self) -> dict[Poly, dict[int, Poly]]:
        grouped: dict[Poly, dict[int, Poly]] = {}
        for (base, degree), coeff in self._terms.items():
            grouped.setdefault(base, {})[degree] = coeff
        return grouped

    def bases(self) -> set[Poly]:
        return {base for base, _ in self._terms}

    def value_at_zero(self) -> Poly:
        """f(0) as a polynomial; every base contributes via base**0 == 1."""
        total = Poly()
        for (base, degree), coeff in self._terms.items():
            if degree == 0:
                total = total + coeff
        return total

    def drop_zero_base(self) -> "ExpPoly":
        return ExpPoly({k: v for k, v in self._terms.items() if not k[0].is_zero()})

    def zero_base_part(self) -> Poly:
        total = Poly()
        for (base, degree), coeff in self._terms.items():
            if base.is_zero() and degree == 0:
                total = total + coeff
        return total

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        if not isinstance(other, ExpPoly):
            return NotImplemented
        terms = dict(self._terms)
        for key, coeff in other._terms.items():
            terms[key] = terms.get(key, ZERO) + coeff
        return ExpPoly(terms)

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + other.scale(-1)

    def scale(self, factor: Poly | Scalar) -> "ExpPoly":
        f = factor if isinstance(factor, Poly) else Poly.const(factor)
        return ExpPoly({k: c * f for k, c in self._terms.items()})

    def shift(self) -> "ExpPoly":
        """The sequence n -> f(n+1), again as an exponential polynomial.

        coeff*base**(n+1)*(n+1)**d expands through the binomial theorem;
        base-0 terms vanish because 0**(n+1) == 0 for every n >= 0.
        """
        terms: dict[tuple[Poly, int], Poly] = {}
        for (base, degree), coeff in self._terms.items():
            scaled = coeff * base
            if scaled.is_zero():
                continue
            for j in range(degree + 1):
                key = (base, j)
                piece = scaled * math.comb(degree, j)
                terms[key] = terms.get(key, ZERO) + piece
        return ExpPoly(terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExpPoly):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, n: int, bindings: Mapping[str, Scalar] | None = None) -> Fraction:
        """Exact value at loop iteration ``n`` (with 0**0 == 1)."""
        if n < 0:
            raise ValueError("the loop counter is nonnegative")
        bindings = bindings or {}
        total = Fraction(0)
        for (base, degree), coeff in self._terms.items():
            b = base.evaluate(bindings)
            total += coeff.evaluate(bindings) * b**n * Fraction(n) ** degree
        return total

    def free_symbols(self) -> set[str]:
        out: set[str] = set()
        for (base, _), coeff in self._terms.items():
            out |= base.symbols()
            out |= coeff.symbols()
        return out

    # -- rendering --------------------------------------------------------------

    def __str__(self) -> str:
        summands: list[tuple[Fraction, Mono, int, Poly | None]] = []
        for base, degree, coeff in self.sorted_terms():
            base_part = None if base == ONE else base
            for mono, q in coeff.sorted_terms():
                summands.append((q, mono, degree, base_part))
        return render_sum(summands)

    def __repr__(self) -> str:
        return f"ExpPoly({self})"


def render_sum(summands: Iterable[tuple[Fraction, Mono, int, Poly | None]]) -> str:
    """Render flat summands (coeff, monomial, n-degree, base or None) as text.

    Produces the canonical surface syntax, e.g. ``b^2*n/3 + y(0)^2`` or
    ``n*2^n/2``; every summand is a single product so the output is easy to
    re-parse.
    """
    parts: list[str] = []
    for coeff, mono, ndeg, base in summands:
        factors: list[str] = []
        num, den = abs(coeff.numerator), coeff.denominator
        for name, exp in mono:
            factors.append(name if exp == 1 else f"{name}^{exp}")
        if ndeg:
            factors.append("n" if ndeg == 1 else f"n^{ndeg}")
        if base is not None:
            factors.append(f"{_render_base(base)}^n")
        if num != 1 or not factors:
            factors.insert(0, str(num))
        body = "*".join(factors)
        if den != 1:
            body += f"/{den}"
        if not parts:
            parts.append(body if coeff >= 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if coeff >= 0 else f"- {body}")
    if not parts:
        return "0"
    return " ".join(parts)


def _render_base(base: Poly) -> str:
    if base.is_const():
        q = base.const_value()
        if q.denominator == 1 and q >= 0:
            return str(q.numerator)
        return f"({q})"
    text = str(base)
    if re.fullmatch(r"[A-Za-z][A-Za-z0-9]*(\(0\))?", text):
        return text
    return f"({text})"
