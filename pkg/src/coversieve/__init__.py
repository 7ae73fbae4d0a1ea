"""Verified computations for covering systems of congruences.

Submodules: ``congruence`` (exact systems and densities), ``primes`` (sieve,
theta, certified prime statistics), ``directed`` (directed-rounding reals),
``lll`` (relative local lemma), ``lab`` (exact staged sieve on small
systems), ``certifier`` (end-to-end bound and schedule search), ``cli``.
"""

__version__ = "0.1.0"

from .congruence import (Congruence, CongruenceSystem, ResidueSet, StageFiltration,  # noqa: E402
                         ERDOS_SYSTEM, event_set, is_covering, lcm_modulus, split_modulus,
                         uncovered_density, uncovered_residues)
from .directed import DirectedReal, Direction, Interval  # noqa: E402
from .errors import CoverSieveError, DirectionError, ResourceError, ValidationError  # noqa: E402

__all__ = [
    "Congruence", "CongruenceSystem", "ResidueSet", "StageFiltration", "ERDOS_SYSTEM",
    "event_set", "is_covering", "lcm_modulus", "split_modulus", "uncovered_density",
    "uncovered_residues", "DirectedReal", "Direction", "Interval", "CoverSieveError",
    "DirectionError", "ResourceError", "ValidationError", "__version__",
]
