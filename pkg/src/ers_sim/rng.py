"""Deterministic random substreams keyed by (domain, entity index).

Every random quantity in a run is drawn from a generator derived from the
root seed plus a fixed domain tag and an entity index, so draws for vehicle
``i`` do not depend on how many vehicles came before it or on any other
parameter of the run.
"""
from __future__ import annotations

import numpy as np

DOMAINS = {
    "arrivals": 1,
    "vehicle": 2,
    "weather": 3,
    "harness": 4,
}


def substream(seed: int, domain: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(int(seed), spawn_key=(DOMAINS[domain], int(index)))))


class StreamFactory:
    """Hands out generators according to the scenario's RNG policy.

    ``per-entity`` gives each (domain, index) its own stream; ``shared`` routes
    every request to one generator per domain, which is cheaper but gives up
    common random numbers across parameter changes.
    """

    def __init__(self, seed: int, policy: str = "per-entity"):
        self.seed = int(seed)
        self.policy = policy
        self._shared: dict[str, np.random.Generator] = {}

    def get(self, domain: str, index: int = 0) -> np.random.Generator:
        if self.policy == "shared":
            if domain not in self._shared:
                self._shared[domain] = substream(self.seed, domain, 0)
            return self._shared[domain]
        return substream(self.seed, domain, index)
