"""Random inputs shared by the property tests and the acceptance suite."""

from __future__ import annotations

import math
import random
from fractions import Fraction

from coversieve.congruence import CongruenceSystem
from coversieve.primes import factorize

# smooth bases up to 10^4 with between two and five prime factors
LAB_BASES = [60, 84, 90, 120, 126, 140, 150, 180, 210, 252, 264, 280, 300, 330, 360, 390, 420,
             462, 495, 546, 630, 660, 770, 840, 858, 910, 990, 1155, 1260, 1365, 1540, 1638,
             2002, 2310, 2520, 2730, 3003, 4620, 5460, 6006, 6930, 9240]


def random_lab_case(rng: random.Random, max_moduli: int = 8):
    """A distinct system with lcm dividing a base <= 10^4, thresholds and e^lambda."""
    Q = rng.choice(LAB_BASES)
    divisors = [d for d in factorize(Q).divisors() if d > 1]
    ms = rng.sample(divisors, rng.randint(1, min(max_moduli, len(divisors))))
    system = CongruenceSystem.from_pairs([(rng.randrange(m), m) for m in ms], distinct=True)
    primes = list(factorize(math.lcm(*ms)).primes)
    cuts = sorted(rng.sample(primes, rng.randint(1, len(primes))))
    if cuts[-1] != primes[-1]:
        cuts.append(primes[-1])
    if cuts[0] > 2 and (len(cuts) == 1 or rng.random() < 0.5):
        cuts.insert(0, 2)
    L = rng.choice([2, 2, 3, Fraction(3, 2)])
    return system, cuts, L
