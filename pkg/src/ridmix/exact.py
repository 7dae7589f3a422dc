"""Exact real numbers with a declared rational-linear structure.

A :class:`QLinear` is a finite combination ``q_0 + q_1 g_1 + ... + q_r g_r``
with rational coefficients over named generators.  The generators are
declared to be linearly independent over the rationals together with 1,
which is what lets frequency sets containing irrationals be lifted to an
integer lattice without guessing from floating point values.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

# Built-in generators.  Square roots of distinct square-free integers are
# independent over Q, and pi is transcendental, so the family stays
# independent.  (pi and e together are NOT included: that is open.)
GENERATORS: dict[str, float] = {
    "sqrt2": math.sqrt(2.0),
    "sqrt3": math.sqrt(3.0),
    "sqrt5": math.sqrt(5.0),
    "sqrt7": math.sqrt(7.0),
    "pi": math.pi,
}

ONE = "1"


def register_generator(name: str, value: float) -> None:
    """Declare a new generator, asserting independence over Q by contract."""
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name) or name == ONE:
        raise ValueError(f"invalid generator name {name!r}")
    if name in GENERATORS and GENERATORS[name] != value:
        raise ValueError(f"generator {name!r} already declared with another value")
    GENERATORS[name] = float(value)


def to_fraction(x) -> Fraction:
    """Convert ints, Fractions and ``"p/q"`` strings exactly.  Floats are rejected."""
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


@dataclass(frozen=True)
class QLinear:
    terms: tuple  # sorted ((generator, Fraction), ...), no zero coefficients

    @staticmethod
    def make(mapping: dict) -> "QLinear":
        items = []
        for g, c in mapping.items():
            c = Fraction(c)
            if c != 0:
                if g != ONE and g not in GENERATORS:
                    raise KeyError(f"unknown generator {g!r}")
                items.append((g, c))
        items.sort()
        return QLinear(tuple(items))

    @staticmethod
    def rational(q) -> "QLinear":
        return QLinear.make({ONE: to_fraction(q)})

    @staticmethod
    def parse(text: str) -> "QLinear":
        """Parse expressions such as ``"1/2 + 3*sqrt2 - pi/4"``."""
        s = text.replace(" ", "")
        if not s:
            raise ValueError("empty expression")
        if s[0] not in "+-":
            s = "+" + s
        pieces = re.findall(r"[+-][^+-]+", s)
        if "".join(pieces) != s:
            raise ValueError(f"cannot parse {text!r}")
        acc: dict = {}
        for p in pieces:
            sign = -1 if p[0] == "-" else 1
            body = p[1:]
            m = re.fullmatch(
                r"(?:(\d+(?:/\d+)?)\*?)?([A-Za-z_][A-Za-z0-9_]*)(?:/(\d+))?|(\d+(?:/\d+)?)",
                body)
            if m is None:
                raise ValueError(f"cannot parse term {p!r} in {text!r}")
            if m.group(4) is not None:
                g, c = ONE, Fraction(m.group(4))
            else:
                g = m.group(2)
                c = Fraction(m.group(1)) if m.group(1) else Fraction(1)
                if m.group(3):
                    c /= int(m.group(3))
            acc[g] = acc.get(g, Fraction(0)) + sign * c
        return QLinear.make(acc)

    @property
    def as_dict(self) -> dict:
        return dict(self.terms)

    @property
    def is_rational(self) -> bool:
        return all(g == ONE for g, _ in self.terms)

    def rational_value(self) -> Fraction:
        if not self.is_rational:
            raise ValueError(f"{self} is not rational")
        return self.as_dict.get(ONE, Fraction(0))

    def __float__(self) -> float:
        return float(sum(float(c) * (1.0 if g == ONE else GENERATORS[g]) for g, c in self.terms))

    def __add__(self, other):
        other = as_qlinear(other)
        acc = self.as_dict
        for g, c in other.terms:
            acc[g] = acc.get(g, Fraction(0)) + c
        return QLinear.make(acc)

    __radd__ = __add__

    def __neg__(self):
        return QLinear(tuple((g, -c) for g, c in self.terms))

    def __sub__(self, other):
        return self + (-as_qlinear(other))

    def __rsub__(self, other):
        return as_qlinear(other) - self

    def __mul__(self, q):
        q = to_fraction(q)
        return QLinear.make({g: c * q for g, c in self.terms})

    __rmul__ = __mul__

    def __truediv__(self, q):
        return self * (1 / to_fraction(q))

    def __lt__(self, other):
        return float(self) < float(as_qlinear(other))

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        out = ""
        for g, c in self.terms:
            body = str(abs(c)) if g == ONE else f"{abs(c)}*{g}"
            sign = "-" if c < 0 else "+"
            out += (f"-{body}" if sign == "-" else body) if not out else f" {sign} {body}"
        return out


Exact = Union[int, Fraction, QLinear]


def as_qlinear(x) -> QLinear:
    if isinstance(x, QLinear):
        return x
    if isinstance(x, str):
        return QLinear.parse(x)
    return QLinear.rational(x)


def parse_exact(x):
    """Parse a config / user value into Fraction (when rational) or QLinear.

    Floats are accepted only when they are integers or have a short exact
    decimal expansion that the user evidently meant (``0.25``).
    """
    if isinstance(x, QLinear):
        return x.rational_value() if x.is_rational else x
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("non-finite number")
        return Fraction(repr(x))
    if isinstance(x, str):
        q = QLinear.parse(x)
        return q.rational_value() if q.is_rational else q
    raise TypeError(f"unsupported exact value {x!r}")


def lcm_many(values: Iterable[int]) -> int:
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    """gcd of two rationals: the largest rational g with a/g, b/g integers."""
    a, b = Fraction(a), Fraction(b)
    if a == 0:
        return abs(b)
    if b == 0:
        return abs(a)
    num = math.gcd(a.numerator * b.denominator, b.numerator * a.denominator)
    return Fraction(num, a.denominator * b.denominator)


def cis_pi(r: Fraction) -> complex:
    """exp(i*pi*r) for rational r, exact at multiples of 1/2."""
    r = Fraction(r) % 2
    if r.denominator == 1:
        return 1.0 + 0j if r == 0 else -1.0 + 0j
    if r.denominator == 2:
        return 1j if r == Fraction(1, 2) else -1j
    # reduce to [-1/2, 1/2] around the nearest quarter turn for accuracy
    quarter = round(r * 2)
    rem = r - Fraction(quarter, 2)
    base = (1.0 + 0j, 1j, -1.0 + 0j, -1j)[quarter % 4]
    ang = math.pi * float(rem)
    return base * complex(math.cos(ang), math.sin(ang))


def cos_pi(r: Fraction) -> float:
    """cos(pi*r) for rational r, exact (+-1 or 0) at multiples of 1/2."""
    return cis_pi(r).real
