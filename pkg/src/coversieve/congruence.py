"""Systems of congruences: covering decision, exact uncovered density, stage filtration.

The central algorithm is the fibre recursion used by :func:`uncovered_density`.
Splitting the integers by their class c mod p (p the largest prime dividing
the working modulus) and substituting z = c + p*t turns every congruence into
a congruence in t with modulus m/p (if p | m and it meets the class) or m
(if p does not divide m). The density is then the average of the densities
of the p reduced systems, and identical subsystems are memoised.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ResourceError, ValidationError
from .primes import factorize

ENUMERATION_THRESHOLD = 1 << 20
BITSET_LIMIT = 1 << 24
DEFAULT_NODE_BUDGET = 1_000_000
DEFAULT_ENUMERATION_BUDGET = 1 << 24


@dataclass(frozen=True, order=True)
class Congruence:
    residue: int
    modulus: int

    def __post_init__(self):
        if not isinstance(self.modulus, int) or self.modulus < 2:
            raise ValidationError(f"modulus must be an integer >= 2, got {self.modulus!r}")
        if not 0 <= self.residue < self.modulus:
            raise ValidationError(f"residue {self.residue} not reduced mod {self.modulus}")

    @classmethod
    def of(cls, a: int, m: int) -> "Congruence":
        if m < 2:
            raise ValidationError(f"modulus must be >= 2, got {m}")
        return cls(a % m, m)

    def __contains__(self, z: int) -> bool:
        return z % self.modulus == self.residue

    def __str__(self) -> str:
        return f"{self.residue} mod {self.modulus}"


@dataclass(frozen=True)
class CongruenceSystem:
    congruences: tuple[Congruence, ...] = ()
    distinct: bool = False

    def __post_init__(self):
        object.__setattr__(self, "congruences", tuple(self.congruences))
        if self.distinct:
            mods = [c.modulus for c in self.congruences]
            if len(set(mods)) != len(mods):
                raise ValidationError("distinct system has repeated moduli")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], distinct: bool = False) -> "CongruenceSystem":
        return cls(tuple(Congruence.of(a, m) for a, m in pairs), distinct)

    @classmethod
    def from_json(cls, obj) -> "CongruenceSystem":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            congs = obj["congruences"]
            pairs = [(int(c["a"]), int(c["m"])) for c in congs]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed congruence system: {exc}") from exc
        return cls.from_pairs(pairs, bool(obj.get("distinct", False)))

    def to_json(self) -> dict:
        return {
            "congruences": [{"a": c.residue, "m": c.modulus} for c in self.congruences],
            "distinct": self.distinct,
        }

    def __len__(self) -> int:
        return len(self.congruences)

    def __iter__(self) -> Iterator[Congruence]:
        return iter(self.congruences)

    @property
    def moduli(self) -> tuple[int, ...]:
        return tuple(c.modulus for c in self.congruences)

    def covers(self, z: int) -> bool:
        return any(z in c for c in self.congruences)

    def without(self, cong: Congruence) -> "CongruenceSystem":
        return CongruenceSystem(tuple(c for c in self.congruences if c != cong), self.distinct)

    def restricted(self, moduli_dividing: int) -> "CongruenceSystem":
        """Subsystem of congruences whose modulus divides ``moduli_dividing``."""
        return CongruenceSystem(
            tuple(c for c in self.congruences if moduli_dividing % c.modulus == 0), self.distinct
        )


ERDOS_SYSTEM = CongruenceSystem.from_pairs(
    [(0, 2), (0, 3), (1, 4), (3, 8), (7, 12), (23, 24)], distinct=True
)


# ---------------------------------------------------------------------------
# residue sets
# ---------------------------------------------------------------------------

def _mask_members(mask: int, modulus: int) -> np.ndarray:
    raw = np.frombuffer(mask.to_bytes((modulus + 7) // 8, "little"), dtype=np.uint8)
    return np.flatnonzero(np.unpackbits(raw, bitorder="little")[:modulus])


class ResidueSet:
    """A set of residues modulo ``modulus``.

    Moduli up to 2**24 use an integer bitmask, larger ones a sorted tuple.
    """

    __slots__ = ("modulus", "_mask", "_sorted")

    def __init__(self, modulus: int, members: Iterable[int] = (), *, _mask: int | None = None):
        if modulus < 1:
            raise ValidationError("modulus must be positive")
        self.modulus = modulus
        self._mask = None
        self._sorted = None
        if _mask is not None:
            self._mask = _mask
            return
        members = sorted(set(int(x) for x in members))
        if members and (members[0] < 0 or members[-1] >= modulus):
            raise ValidationError("residue out of range")
        if modulus <= BITSET_LIMIT:
            mask = 0
            for x in members:
                mask |= 1 << x
            self._mask = mask
        else:
            self._sorted = tuple(members)

    @classmethod
    def from_bool_array(cls, flags: np.ndarray) -> "ResidueSet":
        modulus = len(flags)
        if modulus <= BITSET_LIMIT:
            packed = np.packbits(flags.astype(np.uint8), bitorder="little").tobytes()
            return cls(modulus, _mask=int.from_bytes(packed, "little"))
        return cls(modulus, np.flatnonzero(flags).tolist())

    @classmethod
    def full(cls, modulus: int) -> "ResidueSet":
        if modulus <= BITSET_LIMIT:
            return cls(modulus, _mask=(1 << modulus) - 1)
        return cls(modulus, range(modulus))

    def _members(self) -> np.ndarray:
        if self._mask is not None:
            return _mask_members(self._mask, self.modulus)
        return np.asarray(self._sorted, dtype=np.int64)

    def __iter__(self) -> Iterator[int]:
        return iter(self._members().tolist())

    def __len__(self) -> int:
        return self._mask.bit_count() if self._mask is not None else len(self._sorted)

    def __contains__(self, x: int) -> bool:
        x %= self.modulus
        if self._mask is not None:
            return bool(self._mask >> x & 1)
        i = np.searchsorted(self._sorted, x)
        return i < len(self._sorted) and self._sorted[i] == x

    def __eq__(self, other) -> bool:
        return (isinstance(other, ResidueSet) and self.modulus == other.modulus
                and list(self) == list(other))

    def __hash__(self):
        return hash((self.modulus, tuple(self)))

    @property
    def density(self) -> Fraction:
        return Fraction(len(self), self.modulus)

    def to_list(self) -> list[int]:
        return list(self)

    def lift(self, modulus: int) -> "ResidueSet":
        """Preimage under reduction from ``modulus`` (a multiple of self.modulus)."""
        if modulus % self.modulus:
            raise ValidationError("lift target must be a multiple of the modulus")
        base = self._members()
        reps = (base[None, :] + self.modulus * np.arange(modulus // self.modulus)[:, None]).ravel()
        return ResidueSet(modulus, reps.tolist())

    def union(self, other: "ResidueSet") -> "ResidueSet":
        self._check(other)
        if self._mask is not None:
            return ResidueSet(self.modulus, _mask=self._mask | other._mask)
        return ResidueSet(self.modulus, set(self._sorted) | set(other._sorted))

    def intersection(self, other: "ResidueSet") -> "ResidueSet":
        self._check(other)
        if self._mask is not None:
            return ResidueSet(self.modulus, _mask=self._mask & other._mask)
        return ResidueSet(self.modulus, set(self._sorted) & set(other._sorted))

    def complement(self) -> "ResidueSet":
        if self._mask is not None:
            return ResidueSet(self.modulus, _mask=((1 << self.modulus) - 1) ^ self._mask)
        return ResidueSet(self.modulus, set(range(self.modulus)) - set(self._sorted))

    def _check(self, other):
        if other.modulus != self.modulus:
            raise ValidationError("residue sets live modulo different numbers")

    def __repr__(self):
        items = self.to_list()
        shown = items if len(items) <= 8 else items[:8] + ["..."]
        return f"ResidueSet({self.modulus}, {shown})"


# ---------------------------------------------------------------------------
# exact density by fibre recursion
# ---------------------------------------------------------------------------

def lcm_modulus(system: CongruenceSystem) -> int:
    if not system.congruences:
        raise ValidationError("empty system has no modulus")
    return math.lcm(*system.moduli)


def _enumerate_uncovered(pairs: Iterable[tuple[int, int]], q: int) -> np.ndarray:
    flags = np.ones(q, dtype=bool)
    for a, m in pairs:
        flags[a % m::m] = False
    return flags


def _largest_prime(n: int) -> int:
    return factorize(n).primes[-1]


def _prune(pairs: frozenset) -> frozenset:
    """Drop congruences contained in another congruence of the system."""
    items = sorted(pairs, key=lambda x: x[1])
    kept: list[tuple[int, int]] = []
    for a, m in items:
        if any(m % d == 0 and a % d == b for b, d in kept):
            continue
        kept.append((a, m))
    return frozenset(kept)


class _FibreCounter:
    def __init__(self, enum_threshold: int, node_budget: int):
        self.enum_threshold = enum_threshold
        self.node_budget = node_budget
        self.nodes = 0
        self.memo: dict[frozenset, Fraction] = {}

    def density(self, pairs: frozenset) -> Fraction:
        if not pairs:
            return Fraction(1)
        if any(m == 1 for _, m in pairs):
            return Fraction(0)
        hit = self.memo.get(pairs)
        if hit is not None:
            return hit
        self.nodes += 1
        if self.nodes > self.node_budget:
            raise ResourceError(f"fibre recursion exceeded node budget {self.node_budget}")
        q = math.lcm(*(m for _, m in pairs))
        if q <= self.enum_threshold:
            out = Fraction(int(_enumerate_uncovered(pairs, q).sum()), q)
        else:
            p = _largest_prime(q)
            total = Fraction(0)
            for c in range(p):
                sub = set()
                full = False
                for a, m in pairs:
                    if m % p == 0:
                        if a % p != c:
                            continue
                        m2 = m // p
                        if m2 == 1:
                            full = True
                            break
                        sub.add((((a - c) // p) % m2, m2))
                    else:
                        sub.add((((a - c) * pow(p, -1, m)) % m, m))
                if full:
                    continue
                total += self.density(_prune(frozenset(sub)))
            out = total / p
        self.memo[pairs] = out
        return out


def uncovered_density(system: CongruenceSystem, enum_threshold: int = ENUMERATION_THRESHOLD,
                      node_budget: int = DEFAULT_NODE_BUDGET) -> Fraction:
    """Exact natural density of the integers satisfying none of the congruences."""
    if not system.congruences:
        return Fraction(1)
    counter = _FibreCounter(enum_threshold, node_budget)
    pairs = frozenset((c.residue, c.modulus) for c in system)
    return counter.density(_prune(pairs))


def is_covering(system: CongruenceSystem, enum_threshold: int = ENUMERATION_THRESHOLD,
                node_budget: int = DEFAULT_NODE_BUDGET) -> bool:
    return uncovered_density(system, enum_threshold, node_budget) == 0


def uncovered_residues(system: CongruenceSystem, q: int,
                       budget: int = DEFAULT_ENUMERATION_BUDGET) -> ResidueSet:
    """The uncovered set R as a set of residues mod q (q a multiple of the lcm)."""
    if system.congruences and q % lcm_modulus(system):
        raise ValidationError(f"{q} is not a multiple of the system modulus")
    if q > budget:
        raise ResourceError(f"modulus {q} exceeds enumeration budget {budget}")
    return ResidueSet.from_bool_array(
        _enumerate_uncovered(((c.residue, c.modulus) for c in system), q))


def split_modulus(m: int, q_i: int) -> tuple[int, int]:
    """Factor m = m0 * n with every prime of m0 dividing q_i and gcd(n, q_i) = 1."""
    if m < 1 or q_i < 1:
        raise ValidationError("split_modulus expects positive integers")
    n = m
    g = math.gcd(n, q_i)
    while g > 1:
        n //= g
        g = math.gcd(n, g)
    return m // n, n


# ---------------------------------------------------------------------------
# stage filtration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageFiltration:
    """Thresholds P_0 < P_1 < ... and the derived stage moduli.

    ``Q[i]`` is the product of p**v_p(Q) over primes p <= P_i; ``M[i]`` the
    moduli of the system dividing Q[i]; ``N_next[i]`` the divisors n > 1 of
    Q[i+1] / Q[i] (all primes in (P_i, P_{i+1}]).
    """

    thresholds: tuple
    Q: tuple[int, ...]
    M: tuple[frozenset, ...]
    N_next: tuple[tuple[int, ...], ...]
    valuations: dict = field(default_factory=dict)

    @classmethod
    def build(cls, system: CongruenceSystem, thresholds: Sequence) -> "StageFiltration":
        ths = tuple(Fraction(t) if not isinstance(t, int) else t for t in thresholds)
        if not ths:
            raise ValidationError("need at least one threshold")
        if ths[0] < 2:
            raise ValidationError("P_0 must be >= 2")
        if any(b <= a for a, b in zip(ths, ths[1:])):
            raise ValidationError("thresholds must be strictly increasing")
        big_q = lcm_modulus(system) if system.congruences else 1
        vals = dict(factorize(big_q).prime_powers)
        qs = []
        for t in ths:
            q = 1
            for p, e in vals.items():
                if p <= t:
                    q *= p**e
            qs.append(q)
        mods = tuple(frozenset(m for m in set(system.moduli) if q % m == 0) for q in qs)
        nxt = []
        for a, b in zip(qs, qs[1:]):
            fresh = factorize(b // a).divisors()
            nxt.append(tuple(d for d in fresh if d > 1))
        return cls(ths, tuple(qs), mods, tuple(nxt), vals)

    @property
    def stages(self) -> int:
        return len(self.thresholds)

    def new_primes(self, i: int) -> list[int]:
        """Primes p | Q in (P_i, P_{i+1}]."""
        return factorize(self.Q[i + 1] // self.Q[i]).primes

    def covers_system(self) -> bool:
        return self.Q[-1] == math.prod(p**e for p, e in self.valuations.items())


def event_set(filtration: StageFiltration, system: CongruenceSystem, i: int, n: int,
              r: int) -> ResidueSet:
    """A_{n,r}: the classes mod n*Q_i inside r mod Q_i removed by moduli m0*n."""
    if i < 0 or i + 1 >= filtration.stages:
        raise ValidationError(f"stage {i} out of range")
    if n not in filtration.N_next[i]:
        raise ValidationError(f"{n} is not a new modulus at stage {i + 1}")
    q_i = filtration.Q[i]
    if not 0 <= r < q_i:
        raise ValidationError("r must be reduced mod Q_i")
    return ResidueSet(n * q_i, _event_classes(system, q_i, filtration.Q[i + 1], n, r))


def _event_classes(system: CongruenceSystem, q_i: int, q_next: int, n: int, r: int) -> set[int]:
    out = set()
    inv = pow(q_i, -1, n)
    for c in system:
        m = c.modulus
        if q_next % m:
            continue
        m0, nn = split_modulus(m, q_i)
        if nn != n or (r - c.residue) % m0:
            continue
        # z = r + q_i * t with z = a mod n
        t = ((c.residue - r) * inv) % n
        out.add(r + q_i * t)
    return out
