"""Outward-rounded interval arithmetic and one-sided certified bounds.

Every quantity that ends up in a certificate is computed as an
:class:`Interval` whose endpoints are binary floating point numbers rounded
away from the exact value. :class:`DirectedReal` is the user-facing view of
such an enclosure: it exposes a single endpoint (an upper or a lower bound)
and refuses arithmetic whose result would not be a bound in a known
direction.

Arithmetic is delegated to ``mpmath.libmp`` with explicit rounding modes.
Basic operations are exactly rounded by libmp. ``exp`` and ``log`` are
evaluated with guard bits and then widened by a relative pad that dominates
libmp's error by many orders of magnitude.
"""

from __future__ import annotations

import contextlib
import contextvars
import enum
from dataclasses import dataclass
from decimal import ROUND_CEILING, ROUND_FLOOR, Context, Decimal
from fractions import Fraction
from typing import Iterator, Union

from mpmath import libmp

from .errors import DirectionError

DEFAULT_PRECISION = 128
GUARD_BITS = 32

_precision: contextvars.ContextVar[int] = contextvars.ContextVar(
    "coversieve_precision", default=DEFAULT_PRECISION
)

Number = Union[int, Fraction, str, "Interval"]

_F = libmp.round_floor
_C = libmp.round_ceiling


def get_precision() -> int:
    return _precision.get()


@contextlib.contextmanager
def working_precision(bits: int) -> Iterator[int]:
    """Temporarily change the default precision used by new intervals."""
    if bits < 16:
        raise ValueError("precision must be at least 16 bits")
    token = _precision.set(int(bits))
    try:
        yield int(bits)
    finally:
        _precision.reset(token)


def _mpf_min(xs):
    m = xs[0]
    for x in xs[1:]:
        if libmp.mpf_lt(x, m):
            m = x
    return m


def _mpf_max(xs):
    m = xs[0]
    for x in xs[1:]:
        if libmp.mpf_gt(x, m):
            m = x
    return m


def _mpf_to_fraction(x) -> Fraction:
    p, q = libmp.to_rational(x)
    return Fraction(int(p), int(q))


def _pad(prec: int):
    # relative pad 2^-(prec + GUARD_BITS - 8) applied after a guarded evaluation
    k = prec + GUARD_BITS - 8
    return (
        libmp.from_man_exp((1 << k) + 1, -k),
        libmp.from_man_exp((1 << k) - 1, -k),
    )


def _exp_bounds(x, prec):
    wp = prec + GUARD_BITS
    y = libmp.mpf_exp(x, wp, libmp.round_nearest)
    up, down = _pad(prec)
    return libmp.mpf_mul(y, down, prec, _F), libmp.mpf_mul(y, up, prec, _C)


def _log_bounds(x, prec):
    if x == libmp.fone:
        return libmp.fzero, libmp.fzero
    wp = prec + GUARD_BITS
    y = libmp.mpf_log(x, wp, libmp.round_nearest)
    up, down = _pad(prec)
    if libmp.mpf_sign(y) > 0:
        return libmp.mpf_mul(y, down, prec, _F), libmp.mpf_mul(y, up, prec, _C)
    return libmp.mpf_mul(y, up, prec, _F), libmp.mpf_mul(y, down, prec, _C)


class Interval:
    """Closed interval ``[lo, hi]`` with mpf endpoints and a working precision."""

    __slots__ = ("lo", "hi", "prec")

    def __init__(self, lo, hi, prec: int | None = None):
        self.lo = lo
        self.hi = hi
        self.prec = prec if prec is not None else get_precision()
        if libmp.mpf_gt(lo, hi):
            raise ValueError("interval endpoints out of order")

    # -- construction -------------------------------------------------
    @classmethod
    def exact(cls, x: Number, prec: int | None = None) -> "Interval":
        """Tightest enclosure of an exact rational (int, Fraction or decimal string)."""
        if isinstance(x, Interval):
            return x
        prec = prec if prec is not None else get_precision()
        if isinstance(x, bool):
            raise TypeError("bool is not a number here")
        if isinstance(x, int):
            v = libmp.from_int(x)
            return cls(v, v, prec)
        if isinstance(x, float):
            v = libmp.from_float(x)
            return cls(v, v, prec)
        if isinstance(x, str):
            x = Fraction(x)
        if isinstance(x, Fraction):
            if x.denominator == 1:
                v = libmp.from_int(x.numerator)
                return cls(v, v, prec)
            lo = libmp.from_rational(x.numerator, x.denominator, prec, _F)
            hi = libmp.from_rational(x.numerator, x.denominator, prec, _C)
            return cls(lo, hi, prec)
        raise TypeError(f"cannot enclose {type(x).__name__}")

    @classmethod
    def hull(cls, a: "Interval", b: "Interval") -> "Interval":
        return cls(_mpf_min([a.lo, b.lo]), _mpf_max([a.hi, b.hi]), max(a.prec, b.prec))

    def _coerce(self, other) -> "Interval":
        if isinstance(other, Interval):
            return other
        if isinstance(other, DirectedReal):
            return other.enclosure
        return Interval.exact(other, self.prec)

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        o = self._coerce(other)
        p = max(self.prec, o.prec)
        return Interval(libmp.mpf_add(self.lo, o.lo, p, _F), libmp.mpf_add(self.hi, o.hi, p, _C), p)

    __radd__ = __add__

    def __neg__(self):
        return Interval(libmp.mpf_neg(self.hi), libmp.mpf_neg(self.lo), self.prec)

    def __sub__(self, other):
        o = self._coerce(other)
        p = max(self.prec, o.prec)
        return Interval(libmp.mpf_sub(self.lo, o.hi, p, _F), libmp.mpf_sub(self.hi, o.lo, p, _C), p)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        p = max(self.prec, o.prec)
        if libmp.mpf_sign(self.lo) >= 0 and libmp.mpf_sign(o.lo) >= 0:
            return Interval(libmp.mpf_mul(self.lo, o.lo, p, _F), libmp.mpf_mul(self.hi, o.hi, p, _C), p)
        pairs = [(a, b) for a in (self.lo, self.hi) for b in (o.lo, o.hi)]
        lows = [libmp.mpf_mul(a, b, p, _F) for a, b in pairs]
        highs = [libmp.mpf_mul(a, b, p, _C) for a, b in pairs]
        return Interval(_mpf_min(lows), _mpf_max(highs), p)

    __rmul__ = __mul__

    def reciprocal(self) -> "Interval":
        if not (libmp.mpf_sign(self.lo) > 0 or libmp.mpf_sign(self.hi) < 0):
            raise ZeroDivisionError("interval contains zero")
        return Interval(libmp.mpf_div(libmp.fone, self.hi, self.prec, _F),
                        libmp.mpf_div(libmp.fone, self.lo, self.prec, _C), self.prec)

    def __truediv__(self, other):
        o = self._coerce(other)
        p = max(self.prec, o.prec)
        if not (libmp.mpf_sign(o.lo) > 0 or libmp.mpf_sign(o.hi) < 0):
            raise ZeroDivisionError("interval contains zero")
        pairs = [(a, b) for a in (self.lo, self.hi) for b in (o.lo, o.hi)]
        lows = [libmp.mpf_div(a, b, p, _F) for a, b in pairs]
        highs = [libmp.mpf_div(a, b, p, _C) for a, b in pairs]
        return Interval(_mpf_min(lows), _mpf_max(highs), p)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, k: int):
        if not isinstance(k, int):
            raise TypeError("use exp/log for non-integer powers")
        if k < 0:
            return (self ** (-k)).reciprocal()
        if k == 0:
            return Interval.exact(1, self.prec)
        # square-and-multiply; each step is outward rounded
        out, base = Interval.exact(1, self.prec), self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base if libmp.mpf_sign(base.lo) >= 0 else base._square()
        return out

    def _square(self) -> "Interval":
        a = abs(self)
        if libmp.mpf_sign(self.lo) < 0 < libmp.mpf_sign(self.hi):
            return Interval(libmp.fzero, libmp.mpf_mul(a.hi, a.hi, self.prec, _C), self.prec)
        return a * a

    def __abs__(self) -> "Interval":
        if libmp.mpf_sign(self.lo) >= 0:
            return self
        if libmp.mpf_sign(self.hi) <= 0:
            return -self
        return Interval(libmp.fzero, _mpf_max([libmp.mpf_neg(self.lo), self.hi]), self.prec)

    def exp(self) -> "Interval":
        lo, _ = _exp_bounds(self.lo, self.prec)
        _, hi = _exp_bounds(self.hi, self.prec)
        return Interval(lo, hi, self.prec)

    def log(self) -> "Interval":
        if libmp.mpf_sign(self.lo) <= 0:
            raise ValueError("log of non-positive interval")
        lo, _ = _log_bounds(self.lo, self.prec)
        _, hi = _log_bounds(self.hi, self.prec)
        return Interval(lo, hi, self.prec)

    def root(self, k: int) -> "Interval":
        """Positive k-th root of a positive interval."""
        if k == 1:
            return self
        return (self.log() / k).exp()

    def rpow(self, e: Number) -> "Interval":
        """``self ** e`` for a positive base and real exponent."""
        return (self.log() * Interval.exact(e, self.prec) if not isinstance(e, Interval)
                else self.log() * e).exp()

    # -- inspection -----------------------------------------------------
    @property
    def lo_fraction(self) -> Fraction:
        return _mpf_to_fraction(self.lo)

    @property
    def hi_fraction(self) -> Fraction:
        return _mpf_to_fraction(self.hi)

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, x: Number) -> bool:
        if isinstance(x, Interval):
            return libmp.mpf_le(self.lo, x.lo) and libmp.mpf_le(x.hi, self.hi)
        f = Fraction(x)
        return self.lo_fraction <= f <= self.hi_fraction

    def certainly_lt(self, other) -> bool:
        return libmp.mpf_lt(self.hi, self._coerce(other).lo)

    def certainly_le(self, other) -> bool:
        return libmp.mpf_le(self.hi, self._coerce(other).lo)

    def certainly_gt(self, other) -> bool:
        return libmp.mpf_gt(self.lo, self._coerce(other).hi)

    def certainly_ge(self, other) -> bool:
        return libmp.mpf_ge(self.lo, self._coerce(other).hi)

    def width(self) -> float:
        return libmp.to_float(libmp.mpf_sub(self.hi, self.lo, 53, _C))

    def mid(self) -> float:
        return libmp.to_float(libmp.mpf_add(self.lo, self.hi, 60, libmp.round_nearest)) / 2

    def upper(self) -> "DirectedReal":
        return DirectedReal(self, Direction.UPPER)

    def lower(self) -> "DirectedReal":
        return DirectedReal(self, Direction.LOWER)

    def __repr__(self):
        return f"Interval({libmp.to_str(self.lo, 12)}, {libmp.to_str(self.hi, 12)})"


class Direction(enum.Enum):
    UPPER = "upper"
    LOWER = "lower"

    def flip(self) -> "Direction":
        return Direction.LOWER if self is Direction.UPPER else Direction.UPPER


def _scalar(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


@dataclass(frozen=True)
class DirectedReal:
    """A certified one-sided bound on a real number.

    ``value`` is an upper bound when ``direction`` is UPPER and a lower bound
    when it is LOWER. The full enclosure travels along so that every derived
    value stays rigorous; the direction bookkeeping exists to reject
    operations whose result would not be a bound in a definite direction
    (e.g. adding an upper bound to a lower bound).
    """

    enclosure: Interval
    direction: Direction

    @classmethod
    def exact(cls, x: Number, direction: Direction = Direction.UPPER,
              prec: int | None = None) -> "DirectedReal":
        return cls(Interval.exact(x, prec), direction)

    @property
    def precision(self) -> int:
        return self.enclosure.prec

    @property
    def value(self):
        return self.enclosure.hi if self.direction is Direction.UPPER else self.enclosure.lo

    @property
    def fraction(self) -> Fraction:
        return _mpf_to_fraction(self.value)

    def __float__(self) -> float:
        rnd = _C if self.direction is Direction.UPPER else _F
        return libmp.to_float(self.value, rnd=rnd)

    def _other(self, other) -> "DirectedReal":
        if isinstance(other, DirectedReal):
            return other
        if _scalar(other):
            return DirectedReal(Interval.exact(other, self.precision), self.direction)
        raise TypeError(f"unsupported operand {type(other).__name__}")

    def __add__(self, other):
        o = self._other(other)
        if o.direction is not self.direction:
            raise DirectionError("cannot add an upper bound to a lower bound")
        return DirectedReal(self.enclosure + o.enclosure, self.direction)

    __radd__ = __add__

    def __sub__(self, other):
        if _scalar(other):
            return DirectedReal(self.enclosure - other, self.direction)
        if other.direction is self.direction:
            raise DirectionError("subtracting bounds of the same direction has no direction")
        return DirectedReal(self.enclosure - other.enclosure, self.direction)

    def __neg__(self):
        return DirectedReal(-self.enclosure, self.direction.flip())

    def __mul__(self, other):
        if _scalar(other):
            d = self.direction if other >= 0 else self.direction.flip()
            return DirectedReal(self.enclosure * other, d)
        if other.direction is not self.direction:
            raise DirectionError("product of an upper and a lower bound")
        if not (self.enclosure.certainly_ge(0) and other.enclosure.certainly_ge(0)):
            raise DirectionError("product of bounds requires non-negative operands")
        return DirectedReal(self.enclosure * other.enclosure, self.direction)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if _scalar(other):
            if other == 0:
                raise ZeroDivisionError
            d = self.direction if other > 0 else self.direction.flip()
            return DirectedReal(self.enclosure / other, d)
        if other.direction is self.direction:
            raise DirectionError("quotient of two bounds in the same direction")
        if not (self.enclosure.certainly_ge(0) and other.enclosure.certainly_gt(0)):
            raise DirectionError("quotient of bounds requires non-negative / positive operands")
        return DirectedReal(self.enclosure / other.enclosure, self.direction)

    def reciprocal(self) -> "DirectedReal":
        if not self.enclosure.certainly_gt(0):
            raise DirectionError("reciprocal requires a positive quantity")
        return DirectedReal(self.enclosure.reciprocal(), self.direction.flip())

    def exp(self) -> "DirectedReal":
        return DirectedReal(self.enclosure.exp(), self.direction)

    def log(self) -> "DirectedReal":
        return DirectedReal(self.enclosure.log(), self.direction)

    def root(self, k: int) -> "DirectedReal":
        return DirectedReal(self.enclosure.root(k), self.direction)

    def is_below(self, bound: Number, rel_slack: Fraction = Fraction(0)) -> bool:
        """True if this UPPER bound certifies ``x * (1 + rel_slack) < bound``."""
        if self.direction is not Direction.UPPER:
            raise DirectionError("only an upper bound can certify 'below'")
        target = Interval.exact(bound, self.precision) if not isinstance(bound, DirectedReal) \
            else _require(bound, Direction.LOWER).enclosure
        v = Interval(self.value, self.value, self.precision)
        if self.fraction >= 0:
            v = v * (1 + Fraction(rel_slack))
        return v.certainly_lt(target)

    def is_above(self, bound: Number, rel_slack: Fraction = Fraction(0)) -> bool:
        """True if this LOWER bound certifies ``x * (1 - rel_slack) > bound``."""
        if self.direction is not Direction.LOWER:
            raise DirectionError("only a lower bound can certify 'above'")
        target = Interval.exact(bound, self.precision) if not isinstance(bound, DirectedReal) \
            else _require(bound, Direction.UPPER).enclosure
        v = Interval(self.value, self.value, self.precision)
        if self.fraction >= 0:
            v = v * (1 - Fraction(rel_slack))
        return v.certainly_gt(target)

    def to_decimal(self, digits: int = 30) -> str:
        """Decimal string rounded in the bound's direction (never toward the truth)."""
        f = self.fraction
        rounding = ROUND_CEILING if self.direction is Direction.UPPER else ROUND_FLOOR
        ctx = Context(prec=digits, rounding=rounding)
        d = ctx.divide(Decimal(f.numerator), Decimal(f.denominator))
        return format(d, "f") if abs(d.adjusted()) < 25 else str(d)

    def to_json(self, digits: int = 30) -> dict:
        return {"value": self.to_decimal(digits), "direction": self.direction.value}

    @classmethod
    def from_json(cls, obj) -> "DirectedReal":
        if isinstance(obj, dict):
            return cls.exact(Fraction(obj["value"]), Direction(obj.get("direction", "upper")))
        return cls.exact(Fraction(str(obj)))

    def __repr__(self):
        return f"DirectedReal({self.direction.value} {self.to_decimal(20)})"


def _require(x: DirectedReal, direction: Direction) -> DirectedReal:
    if x.direction is not direction:
        raise DirectionError(f"expected a {direction.value} bound")
    return x


def as_interval(x, prec: int | None = None) -> Interval:
    """Coerce numbers, intervals and directed reals to an enclosure."""
    if isinstance(x, Interval):
        return x
    if isinstance(x, DirectedReal):
        return x.enclosure
    return Interval.exact(x, prec)
