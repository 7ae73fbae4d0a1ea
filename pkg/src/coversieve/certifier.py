"""Certified re-derivation of the minimum-modulus bound and schedule search.

A :class:`Schedule` fixes every parameter of the staged sieve. :func:`certify`
checks, in directed-rounded arithmetic,

* the smooth-tail condition (C0) via Rankin's trick,
* the initial bias bound beta_k(0),
* the per-stage constraint (C1) on every stage whose primes are enumerated,
* a closure argument showing (C1) for every later stage.

Every comparison must hold with relative slack ``SLACK``; anything less counts
as a failure. :func:`optimize_schedule` searches a grid of schedules and
bisects the bound M for each one.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from . import __version__
from .directed import DirectedReal, Direction, Interval, get_precision, working_precision
from .errors import CoverSieveError, ValidationError
from .primes import (PrimeTable, analytic_interval_bounds, ell_series_fraction, exp_floor,
                     prime_range_stats, sieve_primes, _product_of_ratios)

SLACK = Fraction(1, 2**64)
DEFAULT_SIEVE_LOG_CAP = Fraction(14)
MAX_TAIL_STAGES = 5000


def _frac(x) -> Fraction:
    if isinstance(x, DirectedReal):
        return x.fraction
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True)
class Schedule:
    """All parameters of one certification attempt. Thresholds are P_i = e^(P0_log + i * stage_step)."""

    M: int = 10**18
    P0_log: Fraction = Fraction(11)
    stage_step: Fraction = Fraction(1)
    lambda_exp: Fraction = Fraction(2)
    pi_good: Fraction = Fraction(1, 2)
    delta: Fraction = Fraction(2, 5)
    sigma: Fraction = Fraction(9, 50)
    k_set: tuple = (3,)
    closure: str = "ratio"
    squarefree: bool = False
    sieve_log_cap: Fraction = DEFAULT_SIEVE_LOG_CAP

    def __post_init__(self):
        for name in ("P0_log", "stage_step", "lambda_exp", "pi_good", "delta", "sigma", "sieve_log_cap"):
            object.__setattr__(self, name, _frac(getattr(self, name)))
        m = Fraction(self.M)
        if m.denominator != 1 or m < 1:
            raise ValidationError("M must be a positive integer")
        object.__setattr__(self, "M", int(m))
        ks = tuple(sorted(set(int(k) for k in self.k_set)))
        object.__setattr__(self, "k_set", ks)
        if not ks or ks[0] < 1:
            raise ValidationError("k_set must contain orders >= 1")
        if self.stage_step <= 0:
            raise ValidationError("stage_step must be positive (thresholds not increasing)")
        if self.P0_log <= 0 or exp_floor(self.P0_log) < 2:
            raise ValidationError("P_0 must be >= 2")
        for name in ("pi_good", "delta", "sigma"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")
        if self.lambda_exp <= 1:
            raise ValidationError("e^lambda must exceed 1")
        if self.closure not in ("ratio", "cumulative"):
            raise ValidationError("closure must be 'ratio' or 'cumulative'")

    @classmethod
    def paper(cls, **overrides) -> "Schedule":
        return cls(**overrides)

    def log_threshold(self, i: int) -> Fraction:
        return self.P0_log + i * self.stage_step

    def to_json(self) -> dict:
        return {
            "M": str(self.M),
            "P0_log": str(self.P0_log),
            "stage_step": str(self.stage_step),
            "lambda_exp": str(self.lambda_exp),
            "pi_good": str(self.pi_good),
            "delta": str(self.delta),
            "sigma": str(self.sigma),
            "k_set": list(self.k_set),
            "closure": self.closure,
            "squarefree": self.squarefree,
            "sieve_log_cap": str(self.sieve_log_cap),
        }

    @classmethod
    def from_json(cls, obj) -> "Schedule":
        if isinstance(obj, str):
            obj = json.loads(obj)
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - allowed
        if unknown:
            raise ValidationError(f"unknown schedule fields: {sorted(unknown)}")
        kw = {}
        for k, v in obj.items():
            if k in ("closure", "squarefree", "k_set"):
                kw[k] = v
            else:
                try:
                    kw[k] = Fraction(str(v))
                except ValueError as exc:
                    raise ValidationError(f"bad value for {k}: {v!r}") from exc
        return cls(**kw)


# ---------------------------------------------------------------------------
# prime tables and cached statistics
# ---------------------------------------------------------------------------

_TABLES: dict[int, PrimeTable] = {}
_STATS: dict[tuple, object] = {}


def table_for(limit: int) -> PrimeTable:
    """A shared prime table covering ``limit`` (tables are immutable)."""
    for lim, t in _TABLES.items():
        if lim >= limit:
            return t
    t = sieve_primes(max(limit, 1000))
    _TABLES[t.limit] = t
    return t


def _table(schedule: Schedule, table: PrimeTable | None) -> PrimeTable:
    need = max(exp_floor(schedule.P0_log), exp_floor(schedule.sieve_log_cap))
    if table is None:
        return table_for(need)
    if table.limit < need:
        raise ValidationError(f"prime table stops at {table.limit}, need {need}")
    return table


def _numeric_stats(lo: int, hi: int, k: int, L: Fraction, v, table: PrimeTable):
    key = ("num", lo, hi, k, L, v, get_precision())
    if key not in _STATS:
        _STATS[key] = prime_range_stats(lo, hi, k, L, table, v)
    return _STATS[key]


def _analytic_stats(a: Fraction, b: Fraction, k: int, L: Fraction):
    key = ("ana", a, b, k, L, get_precision())
    if key not in _STATS:
        _STATS[key] = analytic_interval_bounds(a, b, L, k)
    return _STATS[key]


# ---------------------------------------------------------------------------
# (C0) and the initial bias
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class C0Result:
    bound: DirectedReal
    delta: Fraction
    passed: bool

    def to_json(self) -> dict:
        return {"rankin_upper": self.bound.to_json(), "delta": str(self.delta), "pass": self.passed}


@lru_cache(maxsize=256)
def _log_euler_product(P0: int, sigma: Fraction, prec: int, limit: int) -> Interval:
    """Enclosure of -sum_{p <= P0} log(1 - p^(sigma - 1))."""
    table = table_for(limit)
    e = Interval.exact(sigma - 1, prec)
    total = Interval.exact(0, prec)
    for p in table.up_to(P0).tolist():
        total = total - (1 - (Interval.exact(p, prec).log() * e).exp()).log()
    return total


def rankin_c0(M: int, P0_log, sigma, delta, table: PrimeTable | None = None) -> C0Result:
    """Upper bound M^-sigma * prod_{p <= P0} (1 - p^(sigma-1))^-1 on the P0-smooth tail sum_{m > M} 1/m."""
    sigma, delta = Fraction(sigma), Fraction(delta)
    if not 0 < sigma < 1:
        raise ValidationError("sigma must lie in (0, 1)")
    P0 = exp_floor(Fraction(P0_log))
    if table is not None and table.limit < P0:
        raise ValidationError(f"prime table stops at {table.limit}, need {P0}")
    prec = get_precision()
    log_e = _log_euler_product(P0, sigma, prec, table.limit if table is not None else P0)
    log_m = Interval.exact(int(M), prec).log()
    bound = (log_e - log_m * sigma).exp().upper()
    return C0Result(bound, delta, bound.is_below(delta, SLACK))


def beta0_bound(k: int, P0_log, delta, table: PrimeTable | None = None) -> DirectedReal:
    """Upper bound on beta_k(0): ((1 - delta)^-1 prod_{p <= P0} sum_{j>=0} ((j+1)^k - j^k)/p^j)^(1/k)."""
    delta = Fraction(delta)
    if not 0 <= delta < 1:
        raise ValidationError("delta must lie in [0, 1)")
    P0 = exp_floor(Fraction(P0_log))
    table = table if table is not None and table.limit >= P0 else table_for(P0)
    prec = get_precision()
    nums, dens = [], []
    for p in table.up_to(P0).tolist():
        a, b = ell_series_fraction(k, p)
        nums.append(a + b)
        dens.append(b)
    prod = _product_of_ratios(nums, dens, prec)
    return (prod / (1 - delta)).root(k).upper()


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageData:
    """Upper bounds on the prime statistics over (P_i, P_{i+1}] for each k."""

    i: int
    lo_log: Fraction
    hi_log: Fraction
    method: str
    prod1: DirectedReal
    prod2: dict            # k -> upper bound on prod (1 + L sum_j ell_k(p^j)/p^j)
    sum_k: dict            # k -> upper bound on sum 1/(p-1)^k  (None if unavailable)


def stage_data(schedule: Schedule, i: int, table: PrimeTable) -> StageData:
    a, b = schedule.log_threshold(i), schedule.log_threshold(i + 1)
    L = schedule.lambda_exp
    v = 1 if schedule.squarefree else None
    if b <= schedule.sieve_log_cap:
        lo, hi = exp_floor(a), exp_floor(b)
        stats = {k: _numeric_stats(lo, hi, k, L, v, table) for k in schedule.k_set}
        first = stats[schedule.k_set[0]]
        return StageData(i, a, b, "numeric", first.prod1_upper,
                         {k: s.prod2_upper for k, s in stats.items()},
                         {k: s.sum3_upper for k, s in stats.items()})
    prod2, sums, prod1 = {}, {}, None
    for k in schedule.k_set:
        ab = _analytic_stats(a, b, max(k, 2), L)
        if prod1 is None:
            prod1 = ab.prod1_upper
        if k == 1:
            # sum 1/(p-1) <= integral / (1 - e^-a), and sum_j 1/p^j = 1/(p-1) makes prod2 = prod1
            s1 = ab.integral_bound.enclosure / (1 - (-Interval.exact(a)).exp())
            sums[k] = s1.upper()
            prod2[k] = ab.prod1_upper
        else:
            prod2[k] = ab.prod2_upper
            sums[k] = ab.sum3_upper
    return StageData(i, a, b, "analytic", prod1, prod2, sums)


def growth_factor(k: int, data: StageData, schedule: Schedule) -> DirectedReal:
    """Upper bound on ((1/pi_good) prod (1 + L sum_j ell_k(p^j)/p^j))^(1/k), the per-stage multiplier of beta_k."""
    return (_point(data.prod2[k]) / schedule.pi_good).root(k).upper()


@dataclass(frozen=True)
class C1Result:
    i: int
    method: str
    lhs_upper: DirectedReal
    rhs_lower: DirectedReal
    best_k: int | None
    passed: bool
    rhs_by_k: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"i": self.i, "method": self.method, "c1_lhs_upper": self.lhs_upper.to_json(),
                "c1_rhs_lower": self.rhs_lower.to_json(), "best_k": self.best_k, "pass": self.passed,
                "rhs_lower_by_k": {str(k): v.to_json() for k, v in sorted(self.rhs_by_k.items())}}


def c1_rhs(k: int, beta_upper: DirectedReal, sum_upper: DirectedReal, schedule: Schedule) -> DirectedReal:
    """Lower bound on ((1 - 1/L)/L) (1 - pi)^(1/k) / beta_k * (sum 1/(p-1)^k)^(-1/k)."""
    L = schedule.lambda_exp
    c = (1 - 1 / L) / L
    pi_part = Interval.exact(1 - schedule.pi_good).root(k)
    out = pi_part * c / _point(beta_upper) / _point(sum_upper).root(k)
    return out.lower()


def _point(bound: DirectedReal) -> Interval:
    """The stored bound value as an exact point; a bound is used through its value only."""
    return Interval(bound.value, bound.value, bound.precision)


def c1_check(data: StageData, betas: dict, schedule: Schedule) -> C1Result:
    rhs_by_k = {}
    for k in schedule.k_set:
        s = data.sum_k.get(k)
        if s is None or s.fraction <= 0:
            continue
        rhs_by_k[k] = c1_rhs(k, betas[k], s, schedule)
    if not rhs_by_k:
        if data.sum_k and all(s is not None and s.fraction == 0 for s in data.sum_k.values()):
            # no prime in the interval: nothing is sieved and the right side is unbounded
            return C1Result(data.i, data.method, data.prod1, DirectedReal.exact(1, Direction.LOWER),
                            None, data.prod1.is_below(1, Fraction(0)) or data.prod1.fraction == 1, {})
        return C1Result(data.i, data.method, data.prod1, DirectedReal.exact(0, Direction.LOWER),
                        None, False, {})
    best_k = max(rhs_by_k, key=lambda k: rhs_by_k[k].fraction)
    rhs = rhs_by_k[best_k]
    return C1Result(data.i, data.method, data.prod1, rhs, best_k,
                    data.prod1.is_below(rhs, SLACK), rhs_by_k)


# ---------------------------------------------------------------------------
# tail closure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailResult:
    mode: str
    base_index: int
    k: int | None
    growth_upper: DirectedReal | None
    rhs_growth_lower: DirectedReal | None
    passed: bool
    stages_checked: int = 0
    reason: str = ""

    def to_json(self) -> dict:
        return {
            "mode": self.mode, "base_index": self.base_index, "k": self.k,
            "growth_upper": None if self.growth_upper is None else self.growth_upper.to_json(),
            "rhs_growth_lower": None if self.rhs_growth_lower is None else self.rhs_growth_lower.to_json(),
            "pass": self.passed, "stages_checked": self.stages_checked, "reason": self.reason,
        }


def rhs_growth(k: int, schedule: Schedule) -> DirectedReal:
    """Lower bound on the per-stage growth e^((k-1) s / k) of the (C1) right side in the analytic regime."""
    return (Interval.exact(Fraction((k - 1), k) * schedule.stage_step)).exp().lower()


def tail_closure(schedule: Schedule, base_index: int, betas: dict, table: PrimeTable,
                 stage_log: list | None = None) -> TailResult:
    """Show (C1) for every stage i >= base_index (all analytic).

    The analytic bounds for the interval (e^a, e^(a+s)] all decrease in a, and
    the analytic sum satisfies sum 1/(p-1)^k <= coef(a) / ((k-1) a e^((k-1) a))
    with coef decreasing. So from one stage to the next the (C1) right side
    grows at least by e^((k-1)s/k), beta_k grows at most by the growth factor G
    of the current stage, and the left side does not increase. If (C1) holds
    at stage j and G(j) <= e^((k-1)s/k), it holds at every later stage.

    In ``ratio`` mode j = base_index. In ``cumulative`` mode stages are checked
    one at a time, carrying beta forward, until some stage j passes (C1) with
    G(j) small enough.
    """
    mode = schedule.closure
    cands = [k for k in schedule.k_set if k >= 2]
    if not cands:
        return TailResult(mode, base_index, None, None, None, False, 0,
                          "tail closure needs some k >= 2")
    limit = 1 if mode == "ratio" else MAX_TAIL_STAGES
    cur = dict(betas)
    last = None
    for step in range(limit):
        i = base_index + step
        data = stage_data(schedule, i, table)
        if data.method != "analytic":
            raise ValidationError("tail closure must start in the analytic regime")
        c1 = c1_check(data, cur, schedule)
        if stage_log is not None:
            stage_log.append((c1, {k: cur[k] for k in schedule.k_set}))
        growths = {k: growth_factor(k, data, schedule) for k in schedule.k_set}
        best = None
        for k in cands:
            rhs_k = c1.rhs_by_k.get(k)
            if rhs_k is None or not data.prod1.is_below(rhs_k, SLACK):
                continue
            g, r = growths[k], rhs_growth(k, schedule)
            last = (k, g, r)
            if g.is_below(r, SLACK):
                best = (k, g, r)
                break
        if best is not None:
            return TailResult(mode, base_index, best[0], best[1], best[2], True, step + 1)
        if not c1.passed:
            k, g, r = last if last else (cands[0], growths[cands[0]], rhs_growth(cands[0], schedule))
            return TailResult(mode, base_index, k, g, r, False, step + 1,
                              f"(C1) fails at analytic stage {i}")
        cur = {k: (_point(cur[k]) * _point(growths[k])).upper() for k in schedule.k_set}
    k = cands[0]
    data = stage_data(schedule, base_index, table)
    return TailResult(mode, base_index, k, growth_factor(k, data, schedule), rhs_growth(k, schedule),
                      False, limit, "growth of beta exceeds growth of the (C1) right side")


# ---------------------------------------------------------------------------
# full certificate
# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    schedule: Schedule
    c0: C0Result | None = None
    beta0_upper: dict = field(default_factory=dict)
    stage_checks: list = field(default_factory=list)
    stage_betas: list = field(default_factory=list)
    stage_growth: list = field(default_factory=list)
    tail: TailResult | None = None
    crossover_index: int | None = None
    verdict: str = "failed: not run"
    precision: int = 0

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def to_json(self) -> dict:
        return {
            "tool": "coversieve",
            "version": __version__,
            "precision_bits": self.precision,
            "schedule": self.schedule.to_json(),
            "c0": None if self.c0 is None else self.c0.to_json(),
            "beta0_upper": {str(k): v.to_json() for k, v in sorted(self.beta0_upper.items())},
            "crossover_index": self.crossover_index,
            "stage_checks": [
                {**c.to_json(),
                 "beta_upper": {str(k): v.to_json() for k, v in sorted(b.items())},
                 "growth_upper": {str(k): v.to_json() for k, v in sorted(g.items())}}
                for c, b, g in zip(self.stage_checks, self.stage_betas, self.stage_growth)
            ],
            "tail": None if self.tail is None else self.tail.to_json(),
            "verdict": self.verdict,
        }


def crossover_index(schedule: Schedule) -> int:
    """First stage whose interval (P_i, P_{i+1}] extends past the sieve cap."""
    i = 0
    while schedule.log_threshold(i + 1) <= schedule.sieve_log_cap:
        i += 1
    return i


def certify_core(schedule: Schedule, table: PrimeTable | None = None, with_c0: bool = True) -> Certificate:
    """All checks; (C0) can be skipped when only the M-independent part is needed."""
    table = _table(schedule, table)
    cert = Certificate(schedule, precision=get_precision())
    if with_c0:
        cert.c0 = rankin_c0(schedule.M, schedule.P0_log, schedule.sigma, schedule.delta, table)
        if not cert.c0.passed:
            cert.verdict = "failed: (C0) Rankin bound not below delta"
            return cert
    betas = {k: beta0_bound(k, schedule.P0_log, schedule.delta, table) for k in schedule.k_set}
    cert.beta0_upper = dict(betas)
    cross = crossover_index(schedule)
    cert.crossover_index = cross
    for i in range(cross):
        data = stage_data(schedule, i, table)
        c1 = c1_check(data, betas, schedule)
        growth = {k: growth_factor(k, data, schedule) for k in schedule.k_set}
        cert.stage_checks.append(c1)
        cert.stage_betas.append(dict(betas))
        cert.stage_growth.append(growth)
        if not c1.passed:
            cert.verdict = f"failed: (C1) at stage {i}"
            return cert
        betas = {k: (_point(betas[k]) * _point(growth[k])).upper() for k in schedule.k_set}
    log: list = []
    cert.tail = tail_closure(schedule, cross, betas, table, log)
    for c1, b in log:
        data = stage_data(schedule, c1.i, table)
        cert.stage_checks.append(c1)
        cert.stage_betas.append(b)
        cert.stage_growth.append({k: growth_factor(k, data, schedule) for k in schedule.k_set})
    cert.verdict = "certified" if cert.tail.passed else f"failed: tail closure ({cert.tail.reason})"
    return cert


def certify(schedule: Schedule, table: PrimeTable | None = None) -> Certificate:
    """Run every check. Failures of any kind become a failed verdict, never an exception."""
    try:
        return certify_core(schedule, table)
    except (CoverSieveError, ArithmeticError, ValueError) as exc:
        cert = Certificate(schedule, precision=get_precision())
        cert.verdict = f"failed: {type(exc).__name__}: {exc}"
        return cert


def recheck(cert: Certificate, precision: int = 256) -> bool:
    """Recompute the certificate at higher precision and compare every pass flag."""
    with working_precision(precision):
        fresh = certify(cert.schedule)
    if fresh.verdict != cert.verdict:
        return False
    if (cert.c0 is None) != (fresh.c0 is None):
        return False
    if cert.c0 is not None and cert.c0.passed != fresh.c0.passed:
        return False
    old = [(c.i, c.passed) for c in cert.stage_checks]
    new = [(c.i, c.passed) for c in fresh.stage_checks]
    tails = (cert.tail is None and fresh.tail is None) or (
        cert.tail is not None and fresh.tail is not None and cert.tail.passed == fresh.tail.passed)
    return old == new and tails


def check_certificate_json(obj: dict) -> list[str]:
    """Re-check the inequalities recorded in a certificate's JSON from the stored decimals alone.

    Returns a list of problems (empty if every recorded pass is justified by
    the recorded numbers). Stored uppers are rounded up and lowers down, so
    comparing them as exact rationals is sound.
    """
    problems = []

    def val(d):
        return Fraction(d["value"])

    sched = obj["schedule"]
    if obj.get("c0"):
        c0 = obj["c0"]
        if c0["pass"] and not val(c0["rankin_upper"]) < Fraction(sched["delta"]):
            problems.append("c0 pass not supported by stored bound")
    for st in obj.get("stage_checks", []):
        if st["pass"] and not val(st["c1_lhs_upper"]) <= val(st["c1_rhs_lower"]):
            problems.append(f"stage {st['i']} pass not supported")
        for d in (st["c1_lhs_upper"],):
            if d["direction"] != "upper":
                problems.append("lhs must be an upper bound")
        if st["c1_rhs_lower"]["direction"] != "lower":
            problems.append("rhs must be a lower bound")
    tail = obj.get("tail")
    if tail and tail["pass"]:
        if not val(tail["growth_upper"]) < val(tail["rhs_growth_lower"]):
            problems.append("tail pass not supported")
    if obj.get("verdict") == "certified":
        if not (obj.get("c0") and obj["c0"]["pass"] and tail and tail["pass"]
                and all(s["pass"] for s in obj.get("stage_checks", [])[:obj["crossover_index"] + 1])):
            problems.append("certified verdict without all sub-checks passing")
    return problems


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

def _c0_holds_at(log2_m: Fraction, log_e: Interval, sigma: Fraction, delta: Fraction) -> bool:
    """-sigma * log2_m * log 2 + log E < log delta, with slack."""
    prec = log_e.prec
    lhs = log_e - Interval.exact(2, prec).log() * (sigma * log2_m)
    return (lhs.exp().upper()).is_below(delta, SLACK)


def minimal_m(schedule: Schedule, table: PrimeTable | None = None, steps: int = 64) -> int | None:
    """Smallest certifiable M (up to bisection resolution) for (C0) with this schedule's sigma and delta.

    Bisects log2 M for ``steps`` rounds, then confirms with a fresh (C0) evaluation at the integer.
    """
    table = _table(schedule, table)
    P0 = exp_floor(schedule.P0_log)
    prec = get_precision()
    log_e = _log_euler_product(P0, schedule.sigma, prec, table.limit)
    lo, hi = Fraction(0), Fraction(1)
    while not _c0_holds_at(hi, log_e, schedule.sigma, schedule.delta):
        lo, hi = hi, hi * 2
        if hi > 1 << 16:
            return None
    for _ in range(steps):
        mid = (lo + hi) / 2
        if _c0_holds_at(mid, log_e, schedule.sigma, schedule.delta):
            hi = mid
        else:
            lo = mid
    m = math.ceil((Interval.exact(hi, prec) * Interval.exact(2, prec).log()).exp().hi_fraction)
    for _ in range(64):
        if rankin_c0(m, schedule.P0_log, schedule.sigma, schedule.delta, table).passed:
            return m
        m += max(1, m >> 40)
    return None


@dataclass(frozen=True)
class SearchConfig:
    """A box of candidate values per coordinate; unspecified coordinates stay at ``base``."""

    base: Schedule = field(default_factory=Schedule)
    grid: dict = field(default_factory=dict)
    max_evals: int = 60
    seed: int = 0
    passes: int = 2

    COORDS = ("sigma", "delta", "lambda_exp", "pi_good", "P0_log", "stage_step", "k_set")

    def __post_init__(self):
        for key in self.grid:
            if key not in self.COORDS:
                raise ValidationError(f"unknown search coordinate {key!r}")
        if self.max_evals < 1:
            raise ValidationError("max_evals must be positive")

    @classmethod
    def from_json(cls, obj) -> "SearchConfig":
        if isinstance(obj, str):
            obj = json.loads(obj)
        base = Schedule.from_json(obj.get("base", {}))
        grid = {}
        for k, vals in obj.get("grid", {}).items():
            if k == "k_set":
                grid[k] = [tuple(v) for v in vals]
            else:
                grid[k] = [Fraction(str(v)) for v in vals]
        return cls(base, grid, int(obj.get("max_evals", 60)), int(obj.get("seed", 0)),
                   int(obj.get("passes", 2)))

    def to_json(self) -> dict:
        return {"base": self.base.to_json(),
                "grid": {k: [list(v) if k == "k_set" else str(v) for v in vals]
                         for k, vals in sorted(self.grid.items())},
                "max_evals": self.max_evals, "seed": self.seed, "passes": self.passes}


@dataclass
class SearchResult:
    best: Certificate | None
    evaluations: int
    history: list
    best_failure: dict | None = None

    @property
    def certified(self) -> bool:
        return self.best is not None and self.best.certified

    def to_json(self) -> dict:
        return {
            "certified": self.certified,
            "best_M": None if self.best is None else str(self.best.schedule.M),
            "best_certificate": None if self.best is None else self.best.to_json(),
            "evaluations": self.evaluations,
            "history": self.history,
            "best_failure": self.best_failure,
        }


def _margin(cert: Certificate) -> Fraction | None:
    ratios = [c.rhs_lower.fraction / c.lhs_upper.fraction for c in cert.stage_checks
              if c.lhs_upper.fraction > 0]
    return min(ratios) if ratios else None


def evaluate_schedule(schedule: Schedule, table: PrimeTable | None = None) -> Certificate:
    """Certificate for ``schedule`` with M replaced by the bisected minimum, or a failed one."""
    try:
        core = certify_core(replace(schedule, M=1), table, with_c0=False)
    except (CoverSieveError, ArithmeticError, ValueError) as exc:
        cert = Certificate(schedule, precision=get_precision())
        cert.verdict = f"failed: {type(exc).__name__}: {exc}"
        return cert
    if not core.certified:
        core.schedule = schedule
        return core
    m = minimal_m(schedule, table)
    if m is None:
        cert = Certificate(schedule, precision=get_precision())
        cert.verdict = "failed: no M satisfies (C0)"
        return cert
    return certify(replace(schedule, M=m), table)


def optimize_schedule(config: SearchConfig, table: PrimeTable | None = None) -> SearchResult:
    """Coordinate search over the box; each candidate gets its minimal M by bisection on (C0)."""
    rng = random.Random(config.seed)
    coords = [c for c in SearchConfig.COORDS if c in config.grid]
    rng.shuffle(coords)
    evals = 0
    history = []
    seen: dict = {}
    best_fail = None

    def run(s: Schedule) -> Certificate:
        nonlocal evals, best_fail
        key = json.dumps(replace(s, M=1).to_json(), sort_keys=True)
        if key in seen:
            return seen[key]
        evals += 1
        cert = evaluate_schedule(s, table)
        seen[key] = cert
        history.append({"schedule": replace(s, M=cert.schedule.M).to_json(), "verdict": cert.verdict,
                        "M": str(cert.schedule.M) if cert.certified else None})
        if not cert.certified:
            mg = _margin(cert)
            if mg is not None and (best_fail is None or mg > Fraction(best_fail["min_c1_ratio"])):
                best_fail = {"schedule": s.to_json(), "verdict": cert.verdict,
                             "min_c1_ratio": str(mg)}
        return cert

    current = config.base
    best = run(current)
    for _ in range(config.passes):
        improved = False
        for coord in coords:
            for value in config.grid[coord]:
                if evals >= config.max_evals:
                    break
                try:
                    cand = replace(current, **{coord: value})
                except ValidationError:
                    continue
                cert = run(cand)
                if cert.certified and (not best.certified or cert.schedule.M < best.schedule.M):
                    best, current, improved = cert, replace(cand, M=cert.schedule.M), True
        if not improved or evals >= config.max_evals:
            break
    if best.certified:
        return SearchResult(best, evals, history, best_fail)
    return SearchResult(best, evals, history, best_fail)
