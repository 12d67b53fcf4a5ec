"""Counter-based random streams.

Every stochastic draw in the simulator comes from a Generator keyed by
(seed, domain, ids...), so results are reproducible regardless of event
scheduling or worker count, and toggling one subsystem (e.g. coexistence)
cannot perturb the draws of another.
"""

from __future__ import annotations

import numpy as np

# Domain codes; keep stable, they are part of run reproducibility.
DOM_CHANNEL = 1  # stochastic channel draws per (tx, rx, packet)
DOM_MAC = 2  # CSMA backoff per (vehicle, packet)
DOM_SIDELINK = 3  # sidelink resource choice per (vehicle, packet)
DOM_TRAFFIC = 4  # traffic generator jitter per vehicle


def stream(seed: int, domain: int, *ids: int) -> np.random.Generator:
    """Deterministic generator for one (domain, ids) tuple."""
    key = tuple(int(i) & 0xFFFFFFFF for i in ids)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(domain, *key))
    return np.random.Generator(np.random.PCG64(ss))
