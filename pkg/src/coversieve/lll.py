"""Relative Lovasz Local Lemma on finite uniform spaces.

Events are stored as Python integers used as bitmasks over ``range(space_size)``,
so unions and intersections are single big-integer operations. Probabilities
and weights are exact rationals throughout.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .congruence import CongruenceSystem, ResidueSet, StageFiltration, event_set
from .directed import DirectedReal, Direction, Interval, as_interval
from .errors import ResourceError, ValidationError
from .primes import factorize

BRUTE_FORCE_LIMIT = 1 << 20


def _to_mask(event, space_size: int) -> int:
    if isinstance(event, ResidueSet):
        if event.modulus != space_size:
            raise ValidationError("event modulus differs from the space size")
        members = event.to_list()
    elif isinstance(event, int):
        raise ValidationError("pass events as index collections; use EventSystem.from_masks for bitmasks")
    else:
        members = list(event)
    mask = 0
    for x in members:
        if not 0 <= x < space_size:
            raise ValidationError(f"outcome {x} outside the space")
        mask |= 1 << x
    return mask


@dataclass(frozen=True)
class EventSystem:
    """Events on the uniform space {0, ..., space_size - 1} with a dependency digraph."""

    space_size: int
    masks: tuple[int, ...]
    edges: frozenset
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        n = len(self.masks)
        if self.space_size < 1:
            raise ValidationError("space must be non-empty")
        if len(self.weights) != n:
            raise ValidationError("need one weight per event")
        for x in self.weights:
            if not 0 <= x < 1:
                raise ValidationError(f"weight {x} outside [0, 1)")
        full = (1 << self.space_size) - 1
        if any(m & ~full for m in self.masks):
            raise ValidationError("event references outcomes outside the space")
        for u, v in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"edge ({u}, {v}) references a missing event")
            if u == v:
                raise ValidationError("self-loops are not allowed")

    @classmethod
    def build(cls, space_size: int, events: Sequence, edges: Iterable = (),
              weights: Sequence = (), symmetric: bool = True) -> "EventSystem":
        masks = tuple(_to_mask(e, space_size) for e in events)
        return cls.from_masks(space_size, masks, edges, weights, symmetric)

    @classmethod
    def from_masks(cls, space_size: int, masks: Sequence[int], edges: Iterable = (),
                   weights: Sequence = (), symmetric: bool = True) -> "EventSystem":
        es = set()
        for u, v in edges:
            es.add((int(u), int(v)))
            if symmetric:
                es.add((int(v), int(u)))
        ws = tuple(Fraction(w) for w in weights) if weights else (Fraction(0),) * len(masks)
        return cls(space_size, tuple(masks), frozenset(es), ws)

    @classmethod
    def from_json(cls, obj) -> "EventSystem":
        try:
            return cls.build(int(obj["space_size"]), [list(e) for e in obj["events"]],
                             [tuple(e) for e in obj.get("edges", [])],
                             [Fraction(str(w)) for w in obj.get("weights", [])],
                             bool(obj.get("symmetric", True)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed event system: {exc}") from exc

    def to_json(self) -> dict:
        return {
            "space_size": self.space_size,
            "events": [self.members(u) for u in range(len(self))],
            "edges": sorted(list(e) for e in self.edges),
            "weights": [str(w) for w in self.weights],
            "symmetric": False,
        }

    def __len__(self) -> int:
        return len(self.masks)

    def members(self, u: int) -> list[int]:
        m, out, i = self.masks[u], [], 0
        while m:
            if m & 1:
                out.append(i)
            m >>= 1
            i += 1
        return out

    def probability(self, u: int) -> Fraction:
        return Fraction(self.masks[u].bit_count(), self.space_size)

    def neighbours(self, u: int) -> list[int]:
        return sorted(v for (a, v) in self.edges if a == u)

    def with_weights(self, weights: Sequence) -> "EventSystem":
        return EventSystem(self.space_size, self.masks, self.edges, tuple(Fraction(w) for w in weights))

    def avoid_probability(self, subset: Iterable[int]) -> Fraction:
        """Exact P(intersection of complements over ``subset``)."""
        union = 0
        for u in subset:
            union |= self.masks[u]
        return Fraction(self.space_size - union.bit_count(), self.space_size)


@dataclass(frozen=True)
class CriterionReport:
    ok: bool
    worst_slack: DirectedReal
    slacks: tuple[Fraction, ...]

    def to_json(self) -> dict:
        return {"ok": self.ok, "worst_slack": self.worst_slack.to_json(),
                "slacks": [str(s) for s in self.slacks]}


def check_lovasz_criterion(sys: EventSystem) -> CriterionReport:
    """Check P(A_u) <= x_u * prod_{(u,v) in E} (1 - x_v) for every event u."""
    slacks = []
    for u in range(len(sys)):
        rhs = sys.weights[u]
        for v in sys.neighbours(u):
            rhs *= 1 - sys.weights[v]
        slacks.append(rhs - sys.probability(u))
    worst = min(slacks) if slacks else Fraction(0)
    return CriterionReport(all(s >= 0 for s in slacks), DirectedReal.exact(worst, Direction.LOWER),
                           tuple(slacks))


def lower_bound(sys: EventSystem, U: Iterable[int] | None = None,
                prob_U_intersection: Fraction | None = None) -> Fraction:
    """Lower bound on P(no event occurs).

    With ``U`` empty or None this is the weak form prod (1 - x_u); otherwise
    the relative form P(avoid U) * prod_{v not in U} (1 - x_v). The result
    is an exact rational.
    """
    if not check_lovasz_criterion(sys).ok:
        raise ValidationError("Lovasz criterion not satisfied")
    U = sorted(set(U or ()))
    if any(not 0 <= u < len(sys) for u in U):
        raise ValidationError("U references a missing event")
    if not U:
        return math.prod((1 - x for x in sys.weights), start=Fraction(1))
    if prob_U_intersection is None:
        if sys.space_size > BRUTE_FORCE_LIMIT:
            raise ResourceError("space too large to evaluate P(avoid U) exactly")
        base = sys.avoid_probability(U)
    else:
        base = Fraction(prob_U_intersection)
    rest = set(U)
    return base * math.prod((1 - sys.weights[v] for v in range(len(sys)) if v not in rest),
                            start=Fraction(1))


def brute_force_uncovered(sys: EventSystem) -> Fraction:
    """Exact P(no event occurs) by enumerating the space."""
    if sys.space_size > BRUTE_FORCE_LIMIT:
        raise ResourceError(f"space of size {sys.space_size} exceeds {BRUTE_FORCE_LIMIT}")
    return sys.avoid_probability(range(len(sys)))


def all_relative_bounds(sys: EventSystem) -> dict[int, Fraction]:
    """Relative bound for every non-empty U, keyed by the bitmask of U.

    Unions and complement products are built incrementally over subsets.
    """
    if not check_lovasz_criterion(sys).ok:
        raise ValidationError("Lovasz criterion not satisfied")
    n = len(sys)
    if n > 20:
        raise ResourceError("too many events to enumerate every subset")
    unions = [0] * (1 << n)
    comp = [Fraction(1)] * (1 << n)   # prod of (1 - x_v) over v in the subset
    for s in range(1, 1 << n):
        low = (s & -s).bit_length() - 1
        prev = s & (s - 1)
        unions[s] = unions[prev] | sys.masks[low]
        comp[s] = comp[prev] * (1 - sys.weights[low])
    full = (1 << n) - 1
    N = sys.space_size
    return {s: Fraction(N - unions[s].bit_count(), N) * comp[full ^ s] for s in range(1, 1 << n)}


def random_valid_system(rng: random.Random, max_space: int = 1 << 16, max_events: int = 12,
                        coords: Sequence[int] = (2, 3, 4, 5, 7, 9, 11, 13, 17)) -> EventSystem:
    """Random event system with a provably valid dependency graph.

    The space Z/N is identified with a product of pairwise coprime coordinates
    Z/q_j by CRT. Each event is a set of joint values on one or two
    coordinates; events on disjoint coordinates are independent, so joining
    events that share a coordinate gives a valid graph. Event sizes are chosen
    so the criterion holds for random weights.
    """
    pool = list(coords)
    rng.shuffle(pool)
    want = rng.randint(2, 5)
    chosen: list[int] = []
    for q in pool:
        if len(chosen) == want:
            break
        if math.prod(chosen) * q <= max_space and all(math.gcd(q, c) == 1 for c in chosen):
            chosen.append(q)
    N = math.prod(chosen)
    z = np.arange(N)
    n_events = rng.randint(1, max_events)
    supports = [sorted(rng.sample(range(len(chosen)), rng.randint(1, min(2, len(chosen)))))
                for _ in range(n_events)]
    edges = {(u, v) for u in range(n_events) for v in range(n_events)
             if u != v and set(supports[u]) & set(supports[v])}
    weights = [Fraction(rng.randint(0, 40), 100) for _ in range(n_events)]
    masks = []
    for u in range(n_events):
        target = weights[u]
        for v in range(n_events):
            if (u, v) in edges:
                target *= 1 - weights[v]
        key = np.zeros(N, dtype=np.int64)
        cells = 1
        for j in supports[u]:
            key = key * chosen[j] + z % chosen[j]
            cells *= chosen[j]
        picked = rng.sample(range(cells), math.floor(target * cells))
        flags = np.isin(key, picked)
        packed = np.packbits(flags.astype(np.uint8), bitorder="little").tobytes()
        masks.append(int.from_bytes(packed, "little"))
    return EventSystem(N, tuple(masks), frozenset(edges), tuple(weights))


# ---------------------------------------------------------------------------
# specialisation to a fibre of the staged sieve
# ---------------------------------------------------------------------------

def _exact_or_interval(x):
    iv = as_interval(x)
    if iv.is_point:
        return iv.lo_fraction
    return iv


def _le(a, b) -> bool:
    """Certified a <= b for Fractions (exact) or intervals (outward rounded)."""
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a <= b
    return as_interval(a).certainly_le(b)


def _convexity_holds(x, L) -> bool:
    """1 - x >= exp(-lambda x / (1 - 1/L)) with lambda = log L, for 0 <= x <= 1 - 1/L."""
    if isinstance(x, Fraction) and x == 0:
        return True
    top = 1 - 1 / L
    if isinstance(x, Fraction) and isinstance(top, Fraction):
        if x > top:
            return False
        if x == top:
            return True   # equality: exp(-lambda) = 1/L
    lam = as_interval(L).log()
    rhs = (-(lam * x) / as_interval(top)).exp()
    return as_interval(1 - x).certainly_ge(rhs)


@dataclass(frozen=True)
class FibreWeights:
    weights: dict
    event_sizes: dict
    first_ok: bool        # every 1 - x_n >= 1/L
    convexity_ok: bool    # the convexity inequality for every x_n
    chain_ok: bool        # sum_{p|n} sum_{n': p|n'} x_n' <= omega(n) (1 - 1/L) for every n
    product_ok: bool      # prod_{(n,n')>1} (1 - x_n') >= L^-omega(n) for every n
    lovasz_ok: bool       # the local lemma criterion for the fibre's events

    @property
    def criterion_ok(self) -> bool:
        return self.first_ok and self.convexity_ok and self.chain_ok


def fibre_weights(filtration: StageFiltration, system: CongruenceSystem, i: int, r: int,
                  lambda_exp) -> FibreWeights:
    """Weights x_n = L^omega(n) |A_{n,r}| / n on the fibre above r, and the admissibility chain."""
    L = _exact_or_interval(lambda_exp)
    ns = filtration.N_next[i]
    sizes = {n: len(event_set(filtration, system, i, n, r)) for n in ns}
    om = {n: factorize(n).omega for n in ns}
    xs = {n: (L ** om[n]) * Fraction(sizes[n], n) if sizes[n] else Fraction(0) for n in ns}
    inv_L = 1 / L
    first_ok = all(_le(inv_L, 1 - x) for x in xs.values())
    convexity_ok = first_ok and all(_convexity_holds(x, L) for x in xs.values())
    by_prime: dict[int, list[int]] = {}
    for n in ns:
        for p in factorize(n).primes:
            by_prime.setdefault(p, []).append(n)
    per_prime = {p: sum((xs[n] for n in lst), Fraction(0)) for p, lst in by_prime.items()}
    chain_ok = all(
        _le(sum((per_prime[p] for p in factorize(n).primes), Fraction(0)), om[n] * (1 - inv_L))
        for n in ns)
    product_ok = True
    lovasz_ok = True
    for n in ns:
        prod_all = Fraction(1)
        prod_others = Fraction(1)
        for n2 in ns:
            if math.gcd(n, n2) > 1:
                prod_all = prod_all * (1 - xs[n2])
                if n2 != n:
                    prod_others = prod_others * (1 - xs[n2])
        if not _le(1 / L ** om[n], prod_all):
            product_ok = False
        if not _le(Fraction(sizes[n], n), xs[n] * prod_others):
            lovasz_ok = False
    return FibreWeights(xs, sizes, first_ok, convexity_ok, chain_ok, product_ok, lovasz_ok)


def fibre_event_system(filtration: StageFiltration, system: CongruenceSystem, i: int, r: int,
                       weights: dict | None = None) -> EventSystem:
    """The events A_{n,r} as subsets of the fibre, mapped to Z/(Q_{i+1}/Q_i) by t -> r + Q_i t.

    Edges join distinct n, n' with gcd(n, n') > 1.
    """
    q_i, q_next = filtration.Q[i], filtration.Q[i + 1]
    size = q_next // q_i
    if size > BRUTE_FORCE_LIMIT:
        raise ResourceError("fibre too large to materialise")
    ns = filtration.N_next[i]
    masks = []
    for n in ns:
        classes = event_set(filtration, system, i, n, r)
        mask = 0
        for z in classes:
            t0 = (z - r) // q_i          # class of t modulo n
            for t in range(t0, size, n):
                mask |= 1 << t
        masks.append(mask)
    edges = {(a, b) for a in range(len(ns)) for b in range(len(ns))
             if a != b and math.gcd(ns[a], ns[b]) > 1}
    if weights is None:
        ws = (Fraction(0),) * len(ns)
    else:
        ws = tuple(Fraction(weights[n]) for n in ns)
    return EventSystem(size, tuple(masks), frozenset(edges), ws)
