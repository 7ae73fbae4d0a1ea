from __future__ import annotations

import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from coversieve.congruence import CongruenceSystem, StageFiltration, uncovered_residues
from coversieve.errors import ResourceError, ValidationError
from coversieve.lab import good_fibre_test, initial_state
from coversieve.lll import (EventSystem, all_relative_bounds, brute_force_uncovered,
                            check_lovasz_criterion, fibre_event_system, fibre_weights, lower_bound,
                            random_valid_system)


def naive_avoid(sys: EventSystem, subset) -> Fraction:
    """Count outcomes outside every event of ``subset`` by looping over the space."""
    members = [set(sys.members(u)) for u in subset]
    good = sum(1 for z in range(sys.space_size) if not any(z in m for m in members))
    return Fraction(good, sys.space_size)


# -- examples ---------------------------------------------------------------

def test_criterion_examples():
    two = EventSystem.build(16, [[0, 1, 2, 3], [4, 5, 6, 7]], weights=[Fraction(1, 4)] * 2)
    assert check_lovasz_criterion(two).ok
    one = EventSystem.build(2, [[0]], weights=[Fraction(1, 4)])
    rep = check_lovasz_criterion(one)
    assert not rep.ok and rep.worst_slack.fraction == Fraction(-1, 4)
    with pytest.raises(ValidationError, match="Lovasz criterion not satisfied"):
        lower_bound(one)


def test_lower_bound_examples():
    p = Fraction(3, 10)
    single = EventSystem.build(10, [[0, 1, 2]], weights=[p])
    assert lower_bound(single, [0]) == 1 - p
    # two independent coordinates of Z/16 = Z/4 x Z/4 (bits), each event of probability 1/4
    a = [z for z in range(16) if z % 4 == 0]
    b = [z for z in range(16) if z // 4 == 0]
    indep = EventSystem.build(16, [a, b], weights=[Fraction(1, 4)] * 2)
    assert lower_bound(indep) == Fraction(9, 16) == brute_force_uncovered(indep)


def test_brute_force_examples(erdos):
    assert brute_force_uncovered(EventSystem.build(5, [])) == 1
    assert brute_force_uncovered(EventSystem.build(4, [[0, 1], [2, 3]])) == 0
    events = [[z for z in range(24) if z % c.modulus == c.residue] for c in erdos]
    assert brute_force_uncovered(EventSystem.build(24, events)) == 0
    with pytest.raises(ResourceError):
        brute_force_uncovered(EventSystem(1 << 21, (), frozenset(), ()))


def test_malformed_graphs_are_rejected():
    with pytest.raises(ValidationError):
        EventSystem.build(4, [[0]], edges=[(0, 0)])
    with pytest.raises(ValidationError):
        EventSystem.build(4, [[0]], edges=[(0, 3)])
    with pytest.raises(ValidationError):
        EventSystem.build(4, [[0]], weights=[1])
    with pytest.raises(ValidationError):
        EventSystem.build(4, [[7]])
    with pytest.raises(ValidationError):
        EventSystem.from_json({"events": []})


def test_json_round_trip():
    sys_ = EventSystem.build(8, [[0, 1], [1, 2]], edges=[(0, 1)], weights=["1/3", "1/2"])
    back = EventSystem.from_json(sys_.to_json())
    assert back == sys_
    assert (1, 0) in back.edges   # symmetric input is stored in both directions


# -- soundness on small spaces ----------------------------------------------

@st.composite
def small_systems(draw):
    """Events on the coordinates of Z/60 = Z/4 x Z/3 x Z/5."""
    coords = (4, 3, 5)
    n = draw(st.integers(1, 4))
    supports = [draw(st.sets(st.sampled_from(range(3)), min_size=1, max_size=2)) for _ in range(n)]
    events = []
    for s in supports:
        cells = [tuple(c) for c in itertools.product(*(range(coords[j]) for j in sorted(s)))]
        chosen = draw(st.sets(st.sampled_from(cells), max_size=max(1, len(cells) // 3)))
        events.append([z for z in range(60)
                       if tuple(z % coords[j] for j in sorted(s)) in chosen])
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if supports[u] & supports[v]]
    weights = [draw(st.fractions(0, Fraction(19, 20), max_denominator=20)) for _ in range(n)]
    return EventSystem.build(60, events, edges, weights)


@given(small_systems())
def test_bounds_are_sound_on_small_spaces(sys_):
    if not check_lovasz_criterion(sys_).ok:
        return
    exact = brute_force_uncovered(sys_)
    assert exact == naive_avoid(sys_, range(len(sys_)))
    weak = lower_bound(sys_)
    assert weak <= exact
    for U in range(1, 1 << len(sys_)):
        subset = [u for u in range(len(sys_)) if U >> u & 1]
        rel = lower_bound(sys_, subset)
        assert weak <= rel <= exact


def test_random_valid_systems_are_sound():
    rng = random.Random(2024)
    checked = 0
    for _ in range(120):
        sys_ = random_valid_system(rng, max_space=1 << 12, max_events=8)
        assert check_lovasz_criterion(sys_).ok
        exact = brute_force_uncovered(sys_)
        weak = lower_bound(sys_)
        rel = all_relative_bounds(sys_)
        assert weak <= exact
        assert all(weak <= r <= exact for r in rel.values())
        checked += len(rel)
    assert checked > 0


def test_relative_bounds_match_direct_evaluation():
    rng = random.Random(5)
    sys_ = random_valid_system(rng, max_space=1 << 10, max_events=5)
    table = all_relative_bounds(sys_)
    for mask, value in table.items():
        subset = [u for u in range(len(sys_)) if mask >> u & 1]
        assert value == lower_bound(sys_, subset)
        assert value == lower_bound(sys_, subset, naive_avoid(sys_, subset))


# -- fibre specialisation ---------------------------------------------------

def _stage(pairs, thresholds):
    system = CongruenceSystem.from_pairs(pairs)
    return system, StageFiltration.build(system, thresholds)


def test_fibre_weight_examples():
    system, f = _stage([(1, 10)], [2, 5])
    empty = fibre_weights(f, system, 0, 0, 2)
    assert all(x == 0 for x in empty.weights.values()) and empty.criterion_ok
    fw = fibre_weights(f, system, 0, 1, 2)
    assert fw.weights == {5: Fraction(2, 5)}
    assert fw.criterion_ok and fw.lovasz_ok and fw.product_ok


def test_overlapping_moduli_example():
    # new moduli 5, 7 and 35; on the fibre r = 1 the events are 1 mod 10 and 1 mod 70
    system, f = _stage([(1, 10), (1, 70)], [2, 7])
    fw = fibre_weights(f, system, 0, 1, 2)
    assert fw.weights[5] == Fraction(2, 5) and fw.weights[35] == Fraction(4, 35)
    # hand-checked dilation sum at p = 5: 2/5 + 4/35 = 18/35 > 1/2
    assert Fraction(2, 5) + Fraction(4, 35) > Fraction(1, 2)
    assert not fw.criterion_ok

    system, f = _stage([(1, 70), (3, 70)], [2, 7])
    fw = fibre_weights(f, system, 0, 1, 2)
    # x_35 = 4 * 2 / 35 = 8/35 at both p = 5 and p = 7, below 1/2
    assert fw.weights[35] == Fraction(8, 35)
    assert fw.criterion_ok


def test_fibre_criterion_agrees_with_dilation_test():
    rng = random.Random(99)
    seen = {True: 0, False: 0}
    for _ in range(80):
        ms = rng.sample([2, 3, 4, 6, 10, 14, 15, 21, 22, 30, 33, 35, 42, 70, 77], rng.randint(2, 7))
        pairs = [(rng.randrange(m), m) for m in ms]
        system = CongruenceSystem.from_pairs(pairs)
        try:
            state = initial_state(system, [3, 11], rng.choice([2, Fraction(3, 2), 3]),
                                  max_modulus=10**5)
        except ResourceError:
            continue
        f = state.filtration
        for r in range(f.Q[0]):
            fw = fibre_weights(f, system, 0, r, state.lambda_exp)
            good = good_fibre_test(r, state)
            assert fw.criterion_ok == good
            seen[good] += 1
            if fw.criterion_ok:
                # the admissible weights satisfy the local lemma on the fibre
                assert fw.lovasz_ok and fw.product_ok
    assert seen[True] and seen[False]


def test_fibre_lower_bound_holds():
    system, f = _stage([(1, 10), (2, 15), (4, 21)], [3, 7])
    q0, q1 = f.Q[0], f.Q[1]
    R1 = uncovered_residues(system.restricted(q1), q1)
    for r in range(q0):
        fw = fibre_weights(f, system, 0, r, 2)
        if not fw.lovasz_ok:
            continue
        sys_ = fibre_event_system(f, system, 0, r, fw.weights)
        survivors = Fraction(sum(1 for z in R1 if z % q0 == r), q1 // q0)
        assert brute_force_uncovered(sys_) == survivors
        assert lower_bound(sys_) <= survivors
