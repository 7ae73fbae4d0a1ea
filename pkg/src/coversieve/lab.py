"""Exact execution of the staged sieve on small systems.

Each stage works modulo Q_i with an exact rational measure mu_i on the
surviving residues. Fibres above residues r mod Q_i are classified as good or
not using the per-prime dilation sums, the sieve is advanced inside the good
fibres, and the measure is spread uniformly over the survivors of each fibre.
Every inequality the argument relies on can be checked exactly with
:func:`stage_checks`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .congruence import (CongruenceSystem, ResidueSet, StageFiltration, event_set,
                         uncovered_residues)
from .errors import CoverSieveError, ResourceError, ValidationError
from .lll import _exact_or_interval, _le
from .primes import factorize

DEFAULT_DIVISOR_BUDGET = 100_000
DEFAULT_LAB_MODULUS = 10**5


class StageFailure(CoverSieveError):
    """No good fibre survived a stage; ``report`` lists the failing fibres."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


class PropositionViolation(CoverSieveError, AssertionError):
    """A good fibre was emptied by the sieve. This must never happen."""


def ell_k(k: int, m: int) -> int:
    """Number of k-tuples of positive integers with lcm exactly m."""
    if k < 1 or m < 1:
        raise ValidationError("ell_k needs k >= 1 and m >= 1")
    out = 1
    for _, j in factorize(m).prime_powers:
        out *= (j + 1) ** k - j**k
    return out


@dataclass(frozen=True)
class StageState:
    """Stage i of a lab run.

    ``support`` is R*_{i-1} cap R_i mod Q_i and ``mu`` the measure on it.
    ``R_star`` and ``pi_good`` are filled in by :func:`classify`.
    """

    i: int
    system: CongruenceSystem
    filtration: StageFiltration
    lambda_exp: object
    R_i: ResidueSet
    support: ResidueSet
    mu: dict
    R_star: ResidueSet | None = None
    pi_good: Fraction | None = None
    failures: tuple = ()
    divisor_budget: int = DEFAULT_DIVISOR_BUDGET
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def Q_i(self) -> int:
        return self.filtration.Q[self.i]

    @property
    def L(self):
        return _exact_or_interval(self.lambda_exp)

    @property
    def is_last(self) -> bool:
        return self.i + 1 >= self.filtration.stages

    @property
    def mass(self) -> Fraction:
        return sum(self.mu.values(), Fraction(0))


def initial_state(system: CongruenceSystem, thresholds: Sequence, lambda_exp,
                  max_modulus: int = DEFAULT_LAB_MODULUS,
                  divisor_budget: int = DEFAULT_DIVISOR_BUDGET) -> StageState:
    """Stage 0: R_0 sieved by the moduli dividing Q_0, with mu_0 uniform."""
    filt = StageFiltration.build(system, thresholds)
    if filt.Q[-1] > max_modulus:
        raise ResourceError(f"lab modulus {filt.Q[-1]} exceeds {max_modulus}")
    q0 = filt.Q[0]
    r0 = uncovered_residues(system.restricted(q0), q0)
    size = len(r0)
    mu = {r: Fraction(1, size) for r in r0} if size else {}
    return StageState(0, system, filt, lambda_exp, r0, r0, mu, divisor_budget=divisor_budget)


# ---------------------------------------------------------------------------
# fibre tests
# ---------------------------------------------------------------------------

def event_sizes(r: int, state: StageState) -> dict[int, int]:
    key = ("sizes", r)
    if key not in state._cache:
        f = state.filtration
        state._cache[key] = {n: len(event_set(f, state.system, state.i, n, r))
                             for n in f.N_next[state.i]}
    return state._cache[key]


def dilation_sums(r: int, state: StageState) -> dict[int, object]:
    """For each new prime p: sum over n with p | n of |A_{n,r}| L^omega(n) / n."""
    L = state.L
    sizes = event_sizes(r, state)
    out = {p: Fraction(0) for p in state.filtration.new_primes(state.i)}
    for n, a in sizes.items():
        if not a:
            continue
        fac = factorize(n)
        term = L ** fac.omega * Fraction(a, n)
        for p in fac.primes:
            out[p] = out[p] + term
    return out


def good_fibre_test(r: int, state: StageState) -> bool:
    if state.is_last:
        raise ValidationError("the last stage has no next moduli")
    limit = 1 - 1 / state.L
    return all(_le(s, limit) for s in dilation_sums(r, state).values())


def _fibres(R_next: ResidueSet, q_i: int) -> dict[int, np.ndarray]:
    members = np.fromiter(R_next, dtype=np.int64)
    if not len(members):
        return {}
    keys = members % q_i
    order = np.argsort(keys, kind="stable")
    keys, members = keys[order], members[order]
    cuts = np.flatnonzero(np.diff(keys)) + 1
    return {int(g[0] % q_i): g for g in np.split(members, cuts)}


def well_distributed_test(r: int, state: StageState, R_next: ResidueSet) -> bool:
    if state.is_last:
        raise ValidationError("the last stage has no next moduli")
    key = ("fibres", id(R_next))
    if key not in state._cache:
        state._cache[key] = (_fibres(R_next, state.Q_i), R_next)
    fibre = state._cache[key][0].get(r)
    if fibre is None:
        return False
    L = state.L
    for n in state.filtration.N_next[state.i]:
        top = int(np.bincount(fibre % n, minlength=n).max())
        if not _le(Fraction(top, len(fibre)), L ** factorize(n).omega / Fraction(n)):
            return False
    return True


def classify(state: StageState) -> StageState:
    """Split the support into good fibres R*_i and record pi_good and failures."""
    if not len(state.support):
        raise ValidationError("empty support: nothing to classify")
    good, failures = [], []
    limit = 1 - 1 / state.L
    for r in state.support:
        sums = dilation_sums(r, state)
        bad = {p: s for p, s in sums.items() if not _le(s, limit)}
        if bad:
            failures.append({"r": r, "primes": sorted(bad),
                             "sums": {str(p): str(s) for p, s in sorted(bad.items())}})
        else:
            good.append(r)
    star = ResidueSet(state.Q_i, good)
    pi = sum((state.mu[r] for r in good), Fraction(0)) / state.mass
    return replace(state, R_star=star, pi_good=pi, failures=tuple(failures), _cache=state._cache)


def next_residues(state: StageState) -> ResidueSet:
    """R_{i+1} mod Q_{i+1}: residues missed by every congruence with modulus dividing Q_{i+1}."""
    q = state.filtration.Q[state.i + 1]
    return uncovered_residues(state.system.restricted(q), q)


def mu_update(state: StageState, R_next: ResidueSet) -> dict[int, Fraction]:
    """mu_{i+1}(z) = mu_i(z mod Q_i) / |survivors in that fibre|, over good fibres."""
    if state.R_star is None:
        raise ValidationError("classify the stage first")
    fibres = _fibres(R_next, state.Q_i)
    out = {}
    for r in state.R_star:
        zs = fibres.get(r)
        if zs is None or not len(zs):
            raise PropositionViolation(f"good fibre {r} mod {state.Q_i} has no survivors")
        share = state.mu[r] / len(zs)
        for z in zs.tolist():
            out[z] = share
    return out


def run_stage(state: StageState) -> StageState:
    """Classify fibres, sieve inside good ones and return the next stage."""
    if state.is_last:
        raise ValidationError("no further stage to run")
    if not len(state.support):
        raise ValidationError("R*_{i-1} cap R_i is empty")
    if state.R_star is None:
        state = classify(state)
    if state.pi_good == 0:
        raise StageFailure(f"no good fibre at stage {state.i}", {
            "i": state.i, "failures": list(state.failures)})
    R_next = next_residues(state)
    mu_next = mu_update(state, R_next)
    support = ResidueSet(R_next.modulus, mu_next.keys())
    return StageState(state.i + 1, state.system, state.filtration, state.lambda_exp, R_next,
                      support, mu_next, divisor_budget=state.divisor_budget)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _max_shares(state: StageState) -> dict[int, Fraction]:
    """For each m | Q_i: max_b mu(support cap b mod m) / mu(support)."""
    if "shares" in state._cache:
        return state._cache["shares"]
    fac = factorize(state.Q_i)
    count = math.prod(e + 1 for _, e in fac.prime_powers)
    if count > state.divisor_budget:
        raise ResourceError(f"Q_i has {count} divisors, budget {state.divisor_budget}")
    rs = sorted(state.mu)
    den = math.lcm(*(state.mu[r].denominator for r in rs)) if rs else 1
    ints = np.array([state.mu[r].numerator * (den // state.mu[r].denominator) for r in rs],
                    dtype=object)
    arr = np.array(rs, dtype=np.int64)
    total = int(ints.sum()) if rs else 0
    out = {}
    for m in fac.divisors():
        if not rs:
            out[m] = Fraction(0)
            continue
        acc: dict[int, int] = {}
        for b, w in zip((arr % m).tolist(), ints.tolist()):
            acc[b] = acc.get(b, 0) + w
        out[m] = Fraction(max(acc.values()), total)
    state._cache["shares"] = out
    return out


def bias_statistic(k: int, state: StageState) -> Fraction:
    """beta_k^k(i) = sum over m | Q_i of ell_k(m) * (max class share of mu at modulus m)."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    return sum((ell_k(k, m) * s for m, s in _max_shares(state).items()), Fraction(0))


def moment(k: int, n: int, state: StageState) -> Fraction:
    """M_k^k(i, n): the mu-average of |A_{n,r} mod n Q_i|^k over the support."""
    if state.is_last or n not in state.filtration.N_next[state.i]:
        raise ValidationError(f"{n} is not a new modulus at stage {state.i + 1}")
    acc = sum((state.mu[r] * event_sizes(r, state)[n] ** k for r in state.mu), Fraction(0))
    return acc / state.mass


@dataclass(frozen=True)
class TailBound:
    bound: object
    fraction: Fraction

    @property
    def holds(self) -> bool:
        return _le(self.fraction, self.bound)


def convexity_tail(k: int, weights: dict, B, state: StageState) -> TailBound:
    """Markov bound beta_k^k (sum w)^k / B^k versus the exact share with sum w_n |A_{n,r}| > B."""
    if not B > 0:
        raise ValidationError("B must be positive")
    ws = {n: w for n, w in weights.items() if w != 0}
    if any(not _le(0, w) for w in ws.values()):
        raise ValidationError("weights must be non-negative")
    if not ws:
        raise ValidationError("weights must not all be zero")
    total_w = sum(ws.values(), Fraction(0))
    bound = bias_statistic(k, state) * total_w ** k / B ** k
    bad = Fraction(0)
    for r, m in state.mu.items():
        sizes = event_sizes(r, state)
        s = sum((w * sizes[n] for n, w in ws.items()), Fraction(0))
        if not _le(s, B):
            bad += m
    return TailBound(bound, bad / state.mass)


def dilation_weights(p: int, state: StageState) -> dict:
    """The weights 1{p | n} L^omega(n) / n used to bound failures at prime p."""
    L = state.L
    return {n: L ** factorize(n).omega / Fraction(n)
            for n in state.filtration.N_next[state.i] if n % p == 0}


def union_bound(k: int, state: StageState):
    """Bound on the share of fibres failing some dilation condition, for one k."""
    L = state.L
    ps = state.filtration.new_primes(state.i)
    prod1 = math.prod((1 + L / Fraction(p - 1) for p in ps), start=Fraction(1))
    s = sum((Fraction(1, (p - 1) ** k) for p in ps), Fraction(0))
    return bias_statistic(k, state) * L ** k / (1 - 1 / L) ** k * prod1 ** k * s


def growth_bound(k: int, state: StageState):
    """Right side of the bias growth inequality, using the true valuations of Q."""
    if state.pi_good is None:
        raise ValidationError("classify the stage first")
    L = state.L
    f = state.filtration
    factor = Fraction(1)
    for p in f.new_primes(state.i):
        v = f.valuations[p]
        factor = factor * (1 + L * sum((Fraction(ell_k(k, p**j), p**j) for j in range(1, v + 1)),
                                       Fraction(0)))
    return bias_statistic(k, state) / state.pi_good * factor


# ---------------------------------------------------------------------------
# checks and full runs
# ---------------------------------------------------------------------------

def stage_checks(state: StageState, nxt: StageState, ks: Iterable[int] = (1, 2, 3)) -> dict[str, bool]:
    """Exact verification of every inequality used at stage i (state classified, nxt = run_stage)."""
    ks = tuple(ks)
    f = state.filtration
    i = state.i
    R_next = nxt.R_i
    out = {}
    out["good_implies_well_distributed"] = all(
        well_distributed_test(r, state, R_next) for r in state.R_star)
    out["mass_telescopes"] = nxt.mass == state.pi_good * state.mass
    fibres = _fibres(nxt.support, state.Q_i)
    out["mu_constant_on_fibres"] = all(
        len({nxt.mu[z] for z in zs.tolist()}) == 1 for zs in fibres.values())
    out["moments_below_bias"] = all(_le(moment(k, n, state), bias_statistic(k, state))
                                    for k in ks for n in f.N_next[i])
    B = 1 - 1 / state.L
    conv = True
    for p in f.new_primes(i):
        w = dilation_weights(p, state)
        for k in ks:
            conv &= convexity_tail(k, w, B, state).holds
    out["convexity_tail"] = conv
    out["bias_growth"] = all(_le(bias_statistic(k, nxt), growth_bound(k, state)) for k in ks)
    failing = sum((state.mu[x["r"]] for x in state.failures), Fraction(0)) / state.mass
    out["union_bound"] = any(_le(failing, union_bound(k, state)) for k in ks)
    out["sieve_reconstruction"] = _reconstruction_ok(state, R_next)
    return out


def _reconstruction_ok(state: StageState, R_next: ResidueSet) -> bool:
    """(r mod Q_i) cap R_{i+1} equals the fibre minus the event sets, for every r in the support."""
    q_i = state.Q_i
    q_next = R_next.modulus
    fibres = _fibres(R_next, q_i)
    for r in state.support:
        removed = set()
        for n in state.filtration.N_next[state.i]:
            for z in event_set(state.filtration, state.system, state.i, n, r):
                removed.update(range(z, q_next, n * q_i))
        expect = set(range(r, q_next, q_i)) - removed
        got = set(fibres[r].tolist()) if r in fibres else set()
        if expect != got:
            return False
    return True


@dataclass
class LabRun:
    trace: list
    states: list
    halted: str | None = None
    checks: list = field(default_factory=list)

    @property
    def violations(self) -> list:
        return [(c["i"], name) for c in self.checks for name, ok in c["results"].items() if not ok]

    def to_json(self) -> dict:
        return {"stages": self.trace, "halted": self.halted,
                "checks": [{"i": c["i"], **{k: v for k, v in sorted(c["results"].items())}}
                           for c in self.checks]}


def _stage_record(state: StageState, ks) -> dict:
    return {
        "i": state.i,
        "Q_i": state.Q_i,
        "R_i_size": len(state.R_i),
        "support_size": len(state.support),
        "pi_good": None if state.pi_good is None else str(state.pi_good),
        "beta_k": {str(k): str(bias_statistic(k, state)) for k in ks},
        "failures": list(state.failures),
    }


def run_lab(system: CongruenceSystem, thresholds: Sequence, lambda_exp,
            ks: Sequence[int] = (1, 2, 3), check: bool = False,
            max_modulus: int = DEFAULT_LAB_MODULUS) -> LabRun:
    state = initial_state(system, thresholds, lambda_exp, max_modulus)
    run = LabRun([], [])
    while True:
        if not len(state.support):
            run.trace.append(_stage_record(state, ks))
            run.states.append(state)
            run.halted = f"empty support at stage {state.i}"
            break
        if state.is_last:
            run.trace.append(_stage_record(state, ks))
            run.states.append(state)
            break
        state = classify(state)
        run.trace.append(_stage_record(state, ks))
        run.states.append(state)
        try:
            nxt = run_stage(state)
        except StageFailure as exc:
            run.halted = str(exc)
            break
        if check:
            run.checks.append({"i": state.i, "results": stage_checks(state, nxt, ks)})
        state = nxt
    return run
