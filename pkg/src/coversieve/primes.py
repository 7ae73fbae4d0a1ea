"""Prime tables, Chebyshev theta and certified prime-interval statistics.

Numerically heavy quantities are computed exactly wherever possible: the
products over primes in an interval are rational numbers, assembled with a
product tree of integers and rounded once. Sums of reciprocal powers use
fixed-point accumulation with floor/ceiling rounding of each term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import gmpy2
import numpy as np
from mpmath import libmp

from .directed import DirectedReal, Direction, Interval, as_interval, get_precision
from .errors import ResourceError, ValidationError

DEFAULT_SIEVE_CAP = 2**32
RS_THRESHOLD = 678407
RS_CONSTANT = Fraction(1, 40)

_SEGMENT = 1 << 22


# ---------------------------------------------------------------------------
# sieving
# ---------------------------------------------------------------------------

def _simple_sieve(n: int) -> np.ndarray:
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    flags = np.ones(n + 1, dtype=bool)
    flags[:2] = False
    flags[4::2] = False
    for i in range(3, math.isqrt(n) + 1, 2):
        if flags[i]:
            flags[i * i::2 * i] = False
    return np.flatnonzero(flags).astype(np.int64)


def _segmented_sieve(limit: int) -> np.ndarray:
    base = _simple_sieve(math.isqrt(limit))
    chunks = [base]
    lo = int(base[-1]) + 1 if len(base) else 2
    while lo <= limit:
        hi = min(lo + _SEGMENT - 1, limit)
        flags = np.ones(hi - lo + 1, dtype=bool)
        for p in base:
            p = int(p)
            if p * p > hi:
                break
            start = max(p * p, ((lo + p - 1) // p) * p)
            flags[start - lo::p] = False
        chunks.append(np.flatnonzero(flags).astype(np.int64) + lo)
        lo = hi + 1
    return np.concatenate(chunks)


@dataclass(frozen=True, eq=False)
class PrimeTable:
    """All primes up to ``limit``, ascending."""

    limit: int
    primes: np.ndarray
    _theta_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.primes)

    def pi(self, x) -> int:
        """Number of primes <= x (x may be any real that floor() accepts)."""
        return int(np.searchsorted(self.primes, math.floor(x), side="right"))

    def between(self, lo_exclusive: int, hi_inclusive: int) -> np.ndarray:
        """Primes p with lo < p <= hi."""
        if hi_inclusive > self.limit:
            raise ValidationError(f"prime table stops at {self.limit}, need {hi_inclusive}")
        i = np.searchsorted(self.primes, lo_exclusive, side="right")
        j = np.searchsorted(self.primes, hi_inclusive, side="right")
        return self.primes[i:j]

    def up_to(self, x: int) -> np.ndarray:
        return self.between(1, x)

    def theta_fixed(self, bits: int) -> tuple[list[int], list[int]]:
        """Cumulative theta at each prime as fixed-point integers scaled by 2**bits.

        Returns ``(lo, hi)`` with ``lo[i] <= 2**bits * theta(primes[i]) <= hi[i]``.
        """
        if bits in self._theta_cache:
            return self._theta_cache[bits]
        prec = bits + 32
        lo_acc = hi_acc = 0
        lo, hi = [], []
        for p in self.primes.tolist():
            x = libmp.from_int(p)
            y = libmp.mpf_log(x, prec, libmp.round_nearest)
            man, exp = libmp.mpf_shift(y, bits)[1:3]
            # y * 2**bits = man * 2**exp, with |error| < 2**(bits+3-prec) * y
            v = man << exp if exp >= 0 else man >> -exp
            lo_acc += v - 2
            hi_acc += v + 2
            lo.append(lo_acc)
            hi.append(hi_acc)
        self._theta_cache[bits] = (lo, hi)
        return lo, hi


def sieve_primes(limit: int, cap: int = DEFAULT_SIEVE_CAP) -> PrimeTable:
    """Sieve of Eratosthenes (segmented above a few million)."""
    limit = int(limit)
    if limit < 2:
        raise ValidationError("sieve limit must be at least 2")
    if limit > cap:
        raise ResourceError(f"sieve limit {limit} exceeds cap {cap}")
    primes = _simple_sieve(limit) if limit <= 1 << 24 else _segmented_sieve(limit)
    return PrimeTable(limit, primes)


def exp_floor(log_value: Fraction | int) -> int:
    """floor(e**a) for rational a, refining precision until the floor is certain."""
    a = Fraction(log_value)
    prec = max(64, int(abs(a)) * 2 + 64)
    while True:
        iv = Interval.exact(a, prec).exp()
        lo = math.floor(iv.lo_fraction)
        if lo == math.floor(iv.hi_fraction):
            return lo
        prec *= 2
        if prec > 1 << 16:
            raise ResourceError("could not separate e**a from an integer")


# ---------------------------------------------------------------------------
# theta
# ---------------------------------------------------------------------------

def theta(x, table: PrimeTable) -> tuple[DirectedReal, DirectedReal]:
    """Certified enclosure of theta(x) = sum_{p <= x} log p as (lower, upper)."""
    xf = Fraction(x) if not isinstance(x, Interval) else None
    bound = math.floor(xf) if xf is not None else math.floor(x.hi_fraction)
    if bound > table.limit:
        raise ValidationError(f"x = {x} exceeds prime table limit {table.limit}")
    prec = get_precision()
    count = table.pi(bound)
    if count == 0:
        iv = Interval.exact(0, prec)
    else:
        lo, hi = table.theta_fixed(prec + 32)
        scale = prec + 32
        iv = Interval(libmp.from_man_exp(lo[count - 1], -scale),
                      libmp.from_man_exp(hi[count - 1], -scale), prec)
        iv = iv + 0  # round endpoints to working precision
    return iv.lower(), iv.upper()


def theta_error_bound(x, enforce_threshold: bool = True) -> DirectedReal:
    """Upper bound on x / (40 log x), valid as |theta(x) - x| for x >= 678407.

    With ``enforce_threshold=False`` the formula is evaluated anywhere, but the
    result is then no longer a bound on |theta(x) - x|.
    """
    xi = as_interval(x)
    if enforce_threshold and not xi.certainly_ge(RS_THRESHOLD):
        raise ValidationError("below RS validity threshold (x >= 678407 required)")
    return (xi / (xi.log() * 40)).upper()


def theta_error_constant(x_lo, x_hi: int, table: PrimeTable) -> DirectedReal:
    """Upper bound on sup |theta(x) - x| * log(x) / x over real x in [x_lo, x_hi).

    theta is constant on each gap [p, p'), and on a gap |theta - x| log x / x
    is monotone on either side of theta, so the supremum over the gap is
    reached at one of its two ends. A float pass ranks the gaps; the leading
    ones are then evaluated in interval arithmetic.
    """
    lo_iv = as_interval(x_lo)
    if x_hi + 1 > table.limit:
        raise ValidationError("prime table too small for the requested range")
    prec = get_precision()
    scale = prec + 32
    th_lo, th_hi = table.theta_fixed(scale)
    ps = table.primes
    x_lo_floor = math.floor(lo_iv.lo_fraction)
    start = int(np.searchsorted(ps, x_lo_floor, side="right")) - 1
    stop = int(np.searchsorted(ps, x_hi, side="left"))
    if start < 0 or stop <= start:
        raise ValidationError("range must contain a prime and start above 2")
    idx = np.arange(start, stop)
    t = np.array([th_hi[i] / 2.0**scale for i in idx.tolist()])
    left = np.maximum(ps[idx].astype(float), float(lo_iv.lo_fraction))
    right = np.minimum(ps[idx + 1].astype(float), float(x_hi))
    g = np.maximum((t - left) * np.log(left) / left, (right - t) * np.log(right) / right)
    # float error here is ~1e-12 relative; keep everything within 1e-6 of the top
    keep = idx[g >= g.max() * (1 - 1e-6)]

    best = Interval.exact(0, prec)
    for i in keep.tolist():
        th = Interval(libmp.from_man_exp(th_lo[i], -scale, prec, libmp.round_floor),
                      libmp.from_man_exp(th_hi[i], -scale, prec, libmp.round_ceiling), prec)
        if int(ps[i]) > x_lo_floor:
            a = Interval.exact(int(ps[i]), prec)
        else:
            a = lo_iv
        b = Interval.exact(min(int(ps[i + 1]), x_hi), prec)
        for dev, at in ((th - a, a), (b - th, b)):
            best = Interval.hull(best, dev * at.log() / at)
    return best.upper()


def theta_error_constant_for(lo_log: Fraction, table: PrimeTable | None = None) -> DirectedReal:
    """Error constant c with |theta(x) - x| <= c x / log x for all x >= e**lo_log."""
    lo_iv = Interval.exact(Fraction(lo_log)).exp()
    if lo_iv.certainly_ge(RS_THRESHOLD):
        return DirectedReal.exact(RS_CONSTANT)
    if table is None or table.limit < RS_THRESHOLD:
        table = _cached_table(RS_THRESHOLD + 1000)
    low = theta_error_constant(lo_iv, RS_THRESHOLD, table)
    if low.fraction <= RS_CONSTANT:
        return DirectedReal.exact(RS_CONSTANT)
    return low


@lru_cache(maxsize=4)
def _cached_table(limit: int) -> PrimeTable:
    return sieve_primes(limit)


# ---------------------------------------------------------------------------
# factorization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Factorization:
    n: int
    prime_powers: tuple[tuple[int, int], ...]

    @property
    def omega(self) -> int:
        return len(self.prime_powers)

    @property
    def squarefree(self) -> bool:
        return all(e == 1 for _, e in self.prime_powers)

    @property
    def primes(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.prime_powers)

    def divisors(self) -> list[int]:
        divs = [1]
        for p, e in self.prime_powers:
            divs = [d * p**j for d in divs for j in range(e + 1)]
        return sorted(divs)


_SMALL_PRIMES = _simple_sieve(1 << 16).tolist()


@lru_cache(maxsize=1 << 16)
def factorize(n: int, trial_limit: int = 1 << 20) -> Factorization:
    """Trial division up to ``trial_limit``; larger cofactors must be prime."""
    if n < 1:
        raise ValidationError("factorize expects a positive integer")
    m = n
    out = []
    for p in _SMALL_PRIMES:
        if p * p > m:
            break
        if m % p == 0:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            out.append((p, e))
    else:
        p = _SMALL_PRIMES[-1] + 2
        while p * p <= m:
            if p > trial_limit:
                break
            if m % p == 0:
                e = 0
                while m % p == 0:
                    m //= p
                    e += 1
                out.append((p, e))
            p += 2
    if m > 1:
        if m > trial_limit * trial_limit and not gmpy2.is_bpsw_prp(m):
            raise ResourceError(f"cofactor {m} of {n} is beyond the trial-division budget")
        out.append((m, 1))
    return Factorization(n, tuple(sorted(out)))


def omega(n: int) -> int:
    return factorize(n).omega


# ---------------------------------------------------------------------------
# the series sum_{j>=1} ((j+1)^k - j^k) x^j
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def eulerian_coefficients(k: int) -> tuple[int, ...]:
    """Coefficients of A_k with sum_{j>=0} (j+1)^k x^j = A_k(x) / (1-x)^(k+1)."""
    if k < 1:
        raise ValidationError("moment order must be >= 1")
    return tuple(
        sum((-1) ** j * math.comb(k + 1, j) * (m + 1 - j) ** k for j in range(m + 1))
        for m in range(k)
    )


def ell_series_fraction(k: int, p: int, v: int | None = None) -> tuple[int, int]:
    """sum_{j=1}^{v} ((j+1)^k - j^k) / p^j as (numerator, denominator); v=None means infinity.

    The infinite sum equals A_k(1/p) / (1 - 1/p)^k - 1, i.e.
    (sum_m A(k,m) p^(k-m) - (p-1)^k) / (p-1)^k.
    """
    if v is None:
        coeffs = eulerian_coefficients(k)
        num = sum(c * p ** (k - m) for m, c in enumerate(coeffs))
        den = (p - 1) ** k
        return num - den, den
    den = p**v
    num = sum(((j + 1) ** k - j**k) * p ** (v - j) for j in range(1, v + 1))
    return num, den


def ell_series(k: int, x, v: int | None = None) -> Interval:
    """Enclosure of sum_{j=1}^{v} ((j+1)^k - j^k) x^j for 0 <= x < 1."""
    xi = as_interval(x)
    if v is not None:
        out = Interval.exact(0, xi.prec)
        for j in range(v, 0, -1):
            out = (out + ((j + 1) ** k - j**k)) * xi
        return out
    coeffs = eulerian_coefficients(k)
    poly = Interval.exact(0, xi.prec)
    for c in reversed(coeffs):
        poly = poly * xi + c
    return poly / (1 - xi) ** k - 1


# ---------------------------------------------------------------------------
# statistics over primes in an interval
# ---------------------------------------------------------------------------

def _tree_product(values: Sequence[int]) -> int:
    vals = [gmpy2.mpz(v) for v in values]
    if not vals:
        return gmpy2.mpz(1)
    while len(vals) > 1:
        nxt = [vals[i] * vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def _ratio_interval(num: int, den: int, prec: int) -> Interval:
    return Interval(libmp.from_rational(int(num), int(den), prec, libmp.round_floor),
                    libmp.from_rational(int(num), int(den), prec, libmp.round_ceiling), prec)


def _product_of_ratios(nums: Sequence[int], dens: Sequence[int], prec: int) -> Interval:
    return _ratio_interval(_tree_product(nums), _tree_product(dens), prec)


def _fixed_point_sum(terms_num: Sequence[int], terms_den: Sequence[int], prec: int) -> Interval:
    """Enclosure of sum num_i / den_i via per-term floor/ceil at 2**-W."""
    w = prec + 32 + max(1, len(terms_num)).bit_length()
    lo = hi = 0
    for a, b in zip(terms_num, terms_den):
        q, r = divmod(a << w, b)
        lo += q
        hi += q + (1 if r else 0)
    return Interval(libmp.from_man_exp(lo, -w, prec, libmp.round_floor),
                    libmp.from_man_exp(hi, -w, prec, libmp.round_ceiling), prec)


@dataclass(frozen=True)
class PrimeStats:
    """Certified enclosures of the three prime-interval quantities.

    prod1 = prod (1 + L/(p-1)); prod2 = prod (1 + L * sum_j ((j+1)^k - j^k)/p^j);
    sum3 = sum 1/(p-1)^k, over primes lo < p <= hi.
    """

    lo: int
    hi: int
    count: int
    k: int
    prod1: Interval
    prod2: Interval
    sum3: Interval
    method: str = "numeric"

    @property
    def prod1_upper(self) -> DirectedReal:
        return self.prod1.upper()

    @property
    def prod2_upper(self) -> DirectedReal:
        return self.prod2.upper()

    @property
    def sum3_upper(self) -> DirectedReal:
        return self.sum3.upper()

    def to_json(self, n=None) -> dict:
        out = {
            "prod1_upper": self.prod1_upper.to_decimal(),
            "prod2_upper": self.prod2_upper.to_decimal(),
            "sum3_upper": self.sum3_upper.to_decimal(),
            "method": self.method,
            "k": self.k,
            "prime_count": self.count,
            "range": [self.lo, self.hi],
        }
        if n is not None:
            out = {"n": n, **out}
        return out


def _stats_for_primes(primes: np.ndarray, L: Fraction, k: int, v: int | None,
                      prec: int) -> tuple[Interval, Interval]:
    u, w = L.numerator, L.denominator
    ps = primes.tolist()
    p1 = _product_of_ratios([w * (p - 1) + u for p in ps], [w * (p - 1) for p in ps], prec)
    nums, dens = [], []
    for p in ps:
        a, b = ell_series_fraction(k, p, v)
        nums.append(w * b + u * a)
        dens.append(w * b)
    p2 = _product_of_ratios(nums, dens, prec)
    return p1, p2


def prime_range_stats(lo: int, hi: int, k: int, lambda_exp, table: PrimeTable,
                      v: int | None = None) -> PrimeStats:
    """Statistics over primes lo < p <= hi (integer endpoints)."""
    if k < 1:
        raise ValidationError("moment order must be >= 1")
    if hi > table.limit:
        raise ValidationError(f"prime table stops at {table.limit}, need {hi}")
    prec = get_precision()
    lam = as_interval(lambda_exp, prec)
    if not lam.certainly_ge(1):
        raise ValidationError("e^lambda must be >= 1")
    primes = table.between(lo, hi)
    # both products are increasing in e^lambda: evaluate exactly at each endpoint
    lo1, lo2 = _stats_for_primes(primes, lam.lo_fraction, k, v, prec)
    if lam.is_point:
        hi1, hi2 = lo1, lo2
    else:
        hi1, hi2 = _stats_for_primes(primes, lam.hi_fraction, k, v, prec)
    ps = primes.tolist()
    s3 = _fixed_point_sum([1] * len(ps), [(p - 1) ** k for p in ps], prec)
    return PrimeStats(lo, hi, len(ps), k, Interval(lo1.lo, hi1.hi, prec),
                      Interval(lo2.lo, hi2.hi, prec), s3)


def interval_prime_stats(n, k: int, lambda_exp, table: PrimeTable,
                         width=1, v: int | None = None) -> PrimeStats:
    """Statistics over primes in (e**n, e**(n + width)] for rational n and width."""
    n = Fraction(n)
    if n < 1:
        raise ValidationError("n must be >= 1")
    lo, hi = exp_floor(n), exp_floor(n + Fraction(width))
    if hi > table.limit:
        raise ValidationError(f"table too small: need primes up to {hi}, have {table.limit}")
    return prime_range_stats(lo, hi, k, lambda_exp, table, v)


# ---------------------------------------------------------------------------
# analytic bounds by partial summation against the theta error bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticBounds:
    lo_log: Fraction
    hi_log: Fraction
    k: int
    error_constant: DirectedReal
    integral_bound: DirectedReal      # upper bound on sum 1/p over the interval
    log_prod1_bound: DirectedReal
    log_prod2_bound: DirectedReal
    prod1: Interval
    prod2: Interval
    sum3: Interval
    sum3_coefficient: DirectedReal    # sum3 <= coef / ((k-1) a e^{(k-1) a})
    flags: tuple[str, ...] = ()
    method: str = "analytic"

    @property
    def prod1_upper(self) -> DirectedReal:
        return self.prod1.upper()

    @property
    def prod2_upper(self) -> DirectedReal:
        return self.prod2.upper()

    @property
    def sum3_upper(self) -> DirectedReal:
        return self.sum3.upper()

    def to_json(self, n=None) -> dict:
        out = {
            "prod1_upper": self.prod1_upper.to_decimal(),
            "prod2_upper": self.prod2_upper.to_decimal(),
            "sum3_upper": self.sum3_upper.to_decimal(),
            "method": self.method,
            "k": self.k,
            "integral_upper": self.integral_bound.to_decimal(),
            "log_prod1_upper": self.log_prod1_bound.to_decimal(),
            "log_prod2_upper": self.log_prod2_bound.to_decimal(),
            "sum3_coefficient_upper": self.sum3_coefficient.to_decimal(),
            "theta_error_constant": self.error_constant.to_decimal(),
            "flags": list(self.flags),
        }
        if n is not None:
            out = {"n": n, **out}
        return out


def analytic_interval_bounds(lo_log, hi_log, lambda_exp=2, k: int = 3,
                             error_constant=None, table: PrimeTable | None = None) -> AnalyticBounds:
    """Upper bounds for the prime statistics over (e**a, e**b] without enumerating primes.

    Partial summation against |theta(x) - x| <= c x / log x gives
    sum 1/p <= log(b/a) + c/b^2 + c/a^2 + (2c/a) log(b/a), and the three
    quantities follow from elementary comparisons (see the module tests for
    the derivation being checked against the numeric path).
    """
    a, b = Fraction(lo_log), Fraction(hi_log)
    if a < 1 or b <= a:
        raise ValidationError("need 1 <= a < b")
    if k < 2:
        raise ValidationError("analytic sum bound needs k >= 2")
    prec = get_precision()
    c_dr = theta_error_constant_for(a, table) if error_constant is None else \
        (error_constant if isinstance(error_constant, DirectedReal) else DirectedReal.exact(error_constant))
    c = Interval(c_dr.value, c_dr.value, prec)
    L = as_interval(lambda_exp, prec)
    A = Interval.exact(a, prec)
    B = Interval.exact(b, prec)
    log_ratio = Interval.exact(b / a, prec).log()
    integral = log_ratio + c / (B * B) + c / (A * A) + (2 * c / A) * log_ratio
    e_minus_a = (-A).exp()
    one_minus = 1 - e_minus_a

    log_p1 = L * integral / one_minus
    # S_k(x)/x is increasing, so S_k(1/p) <= (1/p) * e^a * S_k(e^-a) for p > e^a
    s_ratio = ell_series(k, e_minus_a) * A.exp()
    log_p2 = L * s_ratio * integral

    km1 = k - 1
    J = ((-(A * km1)).exp() - (-(B * km1)).exp()) / km1
    bracket = J + c / (B * (B * km1).exp()) + c / (A * (A * km1).exp()) + (c * k / A) * J
    s3 = bracket / (A * one_minus ** k)
    coef = s3 * km1 * A * (A * km1).exp()

    flags = []
    if b == a + 1 and k == 3 and L.is_point and L.lo_fraction == 2:
        if not integral.certainly_lt(Fraction(75, 1000)):
            flags.append("integral bound not below 0.075")
        if not log_p2.certainly_lt(Fraction(106, 100)):
            flags.append("log prod2 bound not below 1.06")
        if not coef.certainly_lt(Fraction(88, 100)):
            flags.append("sum3 coefficient not below 0.88")
    zero = Interval.exact(0, prec)
    return AnalyticBounds(
        a, b, k, c_dr, integral.upper(), log_p1.upper(), log_p2.upper(),
        Interval(libmp.fone, log_p1.exp().hi, prec), Interval(libmp.fone, log_p2.exp().hi, prec),
        Interval(zero.lo, s3.hi, prec), coef.upper(), tuple(flags),
    )


def lemma_a1_analytic(n: int, lambda_exp=2, k: int = 3,
                      table: PrimeTable | None = None) -> AnalyticBounds:
    """Analytic bounds over (e**n, e**(n+1)] for n >= 13."""
    if n < 13:
        raise ValidationError("use numeric path for n < 13")
    return analytic_interval_bounds(n, n + 1, lambda_exp, k, table=table)
