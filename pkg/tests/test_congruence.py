from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from coversieve.congruence import (Congruence, CongruenceSystem, ResidueSet, StageFiltration,
                                   event_set, is_covering, lcm_modulus, split_modulus,
                                   uncovered_density, uncovered_residues)
from coversieve.errors import ResourceError, ValidationError
from coversieve.primes import factorize


def brute_uncovered(pairs, q):
    """Plain loop over [0, q): the enumeration oracle."""
    return [z for z in range(q) if not any(z % m == a % m for a, m in pairs)]


def random_pairs(rng: random.Random, qmax: int = 10**5, size: int = 12):
    """Random congruences whose moduli keep the lcm at most qmax."""
    pairs, q = [], 1
    for _ in range(rng.randint(1, size)):
        m = rng.choice([2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 14, 15, 16, 18, 20, 21, 24, 25, 27, 30, 36, 49])
        if math.lcm(q, m) > qmax:
            continue
        q = math.lcm(q, m)
        pairs.append((rng.randrange(m), m))
    return pairs or [(0, 2)]


systems = st.lists(
    st.tuples(st.integers(0, 200), st.sampled_from([2, 3, 4, 5, 6, 8, 9, 10, 12, 15, 18, 20, 24, 30])),
    min_size=0, max_size=10)


# -- examples ---------------------------------------------------------------

def test_lcm_examples(erdos):
    assert lcm_modulus(CongruenceSystem.from_pairs([(0, 2), (0, 3)])) == 6
    assert lcm_modulus(erdos) == 24
    assert lcm_modulus(CongruenceSystem.from_pairs([(1, 4), (3, 8)])) == 8
    with pytest.raises(ValidationError, match="empty system has no modulus"):
        lcm_modulus(CongruenceSystem.from_pairs([]))


def test_covering_examples(erdos):
    assert is_covering(erdos)
    assert is_covering(CongruenceSystem.from_pairs([(0, 2), (1, 2)]))
    assert not is_covering(CongruenceSystem.from_pairs([(0, 2), (1, 4)]))


def test_density_examples(erdos):
    assert uncovered_density(CongruenceSystem.from_pairs([(0, 2)])) == Fraction(1, 2)
    assert uncovered_density(erdos) == 0
    reduced = erdos.without(Congruence(23, 24))
    assert uncovered_density(reduced) == Fraction(1, 24)
    # oracle: the residues 0..23 left by the other five congruences
    assert brute_uncovered([(c.residue, c.modulus) for c in reduced], 24) == [23]


def test_uncovered_residue_examples(erdos):
    assert uncovered_residues(CongruenceSystem.from_pairs([(0, 2)]), 4).to_list() == [1, 3]
    assert uncovered_residues(erdos.without(Congruence(23, 24)), 24).to_list() == [23]
    assert uncovered_residues(CongruenceSystem.from_pairs([]), 6).to_list() == list(range(6))
    with pytest.raises(ValidationError):
        uncovered_residues(CongruenceSystem.from_pairs([(0, 4)]), 6)
    with pytest.raises(ResourceError):
        uncovered_residues(CongruenceSystem.from_pairs([(0, 4)]), 4 * 2**24, budget=1000)


def test_split_modulus_examples():
    assert split_modulus(30, 6) == (6, 5)
    assert split_modulus(7, 1) == (1, 7)
    assert split_modulus(24, 24) == (24, 1)


def test_event_set_examples():
    one = CongruenceSystem.from_pairs([(1, 10)])
    f = StageFiltration.build(one, [2, 5])
    assert list(f.Q) == [2, 10]
    hit = event_set(f, one, 0, 5, 1)
    assert hit.modulus == 10 and hit.to_list() == [1]
    assert len(event_set(f, one, 0, 5, 0)) == 0

    two = CongruenceSystem.from_pairs([(1, 10), (3, 5)])
    f2 = StageFiltration.build(two, [2, 5])
    got = event_set(f2, two, 0, 5, 1)
    # direct CRT enumeration mod 10: odd z that satisfy either congruence
    oracle = [z for z in range(10) if z % 2 == 1 and (z % 10 == 1 or z % 5 == 3)]
    assert got.to_list() == oracle == [1, 3]
    with pytest.raises(ValidationError):
        event_set(f2, two, 0, 3, 1)


def test_validation():
    with pytest.raises(ValidationError):
        Congruence(0, 1)
    with pytest.raises(ValidationError):
        CongruenceSystem.from_pairs([(0, 2), (1, 2)], distinct=True)
    with pytest.raises(ValidationError):
        CongruenceSystem.from_json({"congruences": [{"a": 0}]})


def test_json_round_trip(erdos):
    obj = erdos.to_json()
    assert CongruenceSystem.from_json(obj) == erdos
    assert obj["congruences"][0] == {"a": 0, "m": 2}


def test_large_modulus_uses_the_tree(erdos):
    extra = [(1, 625), (2, 343), (3, 121), (4, 13)]
    system = CongruenceSystem.from_pairs([(c.residue, c.modulus) for c in erdos] + extra)
    assert lcm_modulus(system) > 2**32
    assert uncovered_density(system) == 0
    without = system.without(Congruence(23, 24))
    # the extra moduli are coprime to 24 and to each other, so by CRT each
    # removes its own share of the single survivor class 23 mod 24
    expect = Fraction(1, 24)
    for _, m in extra:
        expect *= 1 - Fraction(1, m)
    assert uncovered_density(without) == expect


def test_node_budget_is_enforced():
    pairs = [(a, m) for a, m in [(1, 1024), (2, 729), (3, 625), (4, 343), (5, 121), (6, 169)]]
    with pytest.raises(ResourceError):
        uncovered_density(CongruenceSystem.from_pairs(pairs), enum_threshold=1, node_budget=3)


# -- properties -------------------------------------------------------------

@given(systems)
def test_density_matches_enumeration(pairs):
    system = CongruenceSystem.from_pairs(pairs)
    q = lcm_modulus(system) if pairs else 1
    expect = Fraction(len(brute_uncovered(pairs, q)), q)
    assert uncovered_density(system, enum_threshold=1) == expect
    assert uncovered_density(system) == expect
    assert is_covering(system) == (expect == 0)


def test_density_matches_enumeration_random_seeded():
    rng = random.Random(7)
    for _ in range(150):
        pairs = random_pairs(rng)
        system = CongruenceSystem.from_pairs(pairs)
        q = lcm_modulus(system)
        uncovered = uncovered_residues(system, q)
        assert uncovered_density(system, enum_threshold=1) == Fraction(len(uncovered), q)


@given(st.integers(1, 10**6), st.integers(1, 10**4))
def test_split_modulus_is_a_bijection(m, q):
    m0, n = split_modulus(m, q)
    assert m0 * n == m
    assert math.gcd(n, q) == 1
    assert all(q % p == 0 for p in factorize(m0).primes)


def _stage_inputs(rng: random.Random):
    ms = rng.sample([2, 3, 4, 5, 6, 7, 9, 10, 12, 14, 15, 18, 20, 21, 28, 30, 35, 42], rng.randint(2, 8))
    system = CongruenceSystem.from_pairs([(rng.randrange(m), m) for m in ms])
    return system, StageFiltration.build(system, [3, 7])


def test_event_set_size_bounded_by_smooth_parts():
    rng = random.Random(11)
    for _ in range(60):
        system, f = _stage_inputs(rng)
        q0 = f.Q[0]
        for n in f.N_next[0]:
            count = sum(1 for m in system.moduli if split_modulus(m, q0)[1] == n)
            for r in range(q0):
                assert len(event_set(f, system, 0, n, r)) <= count


def test_event_sets_reconstruct_the_sieve():
    rng = random.Random(12)
    for _ in range(60):
        system, f = _stage_inputs(rng)
        q0, q1 = f.Q[0], f.Q[1]
        R1 = set(uncovered_residues(system.restricted(q1), q1))
        R0 = uncovered_residues(system.restricted(q0), q0)
        for r in R0:
            removed = set()
            for n in f.N_next[0]:
                for z in event_set(f, system, 0, n, r):
                    removed.update(range(z, q1, n * q0))
            assert set(range(r, q1, q0)) - removed == {z for z in R1 if z % q0 == r}


# -- residue sets -----------------------------------------------------------

@given(st.sets(st.integers(0, 59)), st.sets(st.integers(0, 59)))
def test_residue_set_algebra(a, b):
    A, B = ResidueSet(60, a), ResidueSet(60, b)
    assert set(A.union(B)) == a | b
    assert set(A.intersection(B)) == a & b
    assert set(A.complement()) == set(range(60)) - a
    assert A.density == Fraction(len(a), 60)
    lifted = A.lift(120)
    assert set(lifted) == {z for z in range(120) if z % 60 in a}


def test_sparse_representation_agrees():
    big = 2**24 + 5
    a = ResidueSet(big, [1, 5, big - 1])
    b = ResidueSet(big, [5, 7])
    assert a.union(b).to_list() == [1, 5, 7, big - 1]
    assert a.intersection(b).to_list() == [5]
    assert 5 in a and 6 not in a
    assert len(a) == 3
