"""Exhaustive solver and random generator for desk-scale verification.

The brute force works directly on a dense boolean array and never touches
the sparse tensor machinery, so it stays an independent check of both the
model evaluation path and the Lagrangean method.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from math import comb

import numpy as np

from .demand import DemandSet
from .errors import ConfigError, TooLarge
from .model import Instance, SlotInfo, Solution, VisibilityTensor

MAX_ENUMERATION = 1e7
MAX_DIMS = (4, 8, 3, 6)  # m, n, l, q


@dataclass(frozen=True)
class MicroInstance:
    """Dense micro instance small enough for exhaustive enumeration."""

    tensor: np.ndarray
    costs: np.ndarray
    p: int

    def __post_init__(self):
        tensor = np.asarray(self.tensor, dtype=bool)
        costs = np.asarray(self.costs, dtype=float)
        if tensor.ndim != 4:
            raise ConfigError("tensor must be (m, n, l, q)")
        for size, cap, name in zip(tensor.shape, MAX_DIMS, "mnlq"):
            if size < 1 or size > cap:
                raise ConfigError(f"dimension {name}={size} outside [1, {cap}]")
        m, n, l, _ = tensor.shape
        if costs.shape != (n,):
            raise ConfigError("costs must have one entry per slot")
        if not 1 <= self.p <= n:
            raise ConfigError("p must be in [1, n]")
        if self.enumeration_size() > MAX_ENUMERATION:
            raise TooLarge(
                f"enumeration size {self.enumeration_size():.3g} exceeds "
                f"{MAX_ENUMERATION:.0e}")
        object.__setattr__(self, "tensor", tensor)
        object.__setattr__(self, "costs", costs)

    @property
    def dims(self):
        return self.tensor.shape

    def enumeration_size(self) -> float:
        m, n, l, _ = self.tensor.shape
        return comb(n, self.p) * float(m + 1) ** (self.p * l)


def random_instance(seed: int, dims=(3, 6, 3, 5), density: float = 0.3,
                    p: int = 2) -> MicroInstance:
    """Seeded random micro instance; entries are 1 with probability density."""
    if not 0.0 <= density <= 1.0:
        raise ConfigError("density must be in [0, 1]")
    rng = np.random.default_rng(seed)
    tensor = rng.random(dims) < density
    costs = rng.uniform(0.9, 0.99, dims[1])
    return MicroInstance(tensor=tensor, costs=costs, p=p)


def brute_force_optimum(micro: MicroInstance) -> tuple[float, Solution]:
    """Exact optimum by enumerating slot subsets and direction assignments.

    Per chosen subset the time steps decouple, so each step's best assignment
    (each chosen slot picks a direction or idles, idle being the last choice
    in enumeration order) is found independently.  Ties keep the first
    assignment in enumeration order and the lexicographically first subset.
    """
    m, n, l, q = micro.tensor.shape
    best = None
    for subset in combinations(range(n), micro.p):
        cost = micro.costs[list(subset)].sum() / l
        theta = np.zeros((l, q), dtype=bool)
        schedule = {}
        total = 0
        for t in range(l):
            best_t = None
            for assign in product(range(m + 1), repeat=micro.p):
                mask = np.zeros(q, dtype=bool)
                for j, a in zip(subset, assign):
                    if a < m:
                        mask |= micro.tensor[a, j, t]
                count = int(mask.sum())
                if best_t is None or count > best_t[0]:
                    best_t = (count, assign, mask)
            count, assign, mask = best_t
            total += count
            theta[t] = mask
            for j, a in zip(subset, assign):
                if a < m:
                    schedule[(j, t)] = a
        z = total - cost
        if best is None or z > best[0]:
            best = (z, subset, schedule, theta)
    z, subset, schedule, theta = best
    coverage = theta.sum() / (l * q)
    solution = Solution(slots=tuple(subset), schedule=schedule, theta=theta,
                        objective=float(z), coverage=float(coverage))
    return float(z), solution


def to_instance(micro: MicroInstance) -> Instance:
    """Wrap a micro instance in the full model Instance type.

    Slot metadata places every slot on one synthetic orbit with evenly
    spaced phases so the intra-orbit neighborhoods are exercised; there is
    no geometry, so inter-orbit neighborhoods are empty.
    """
    m, n, l, q = micro.tensor.shape
    demand = DemandSet(
        targets_km=np.column_stack([np.arange(q) * 1e4, np.zeros(q), np.zeros(q)]),
        demand=np.ones((l, q), dtype=bool),
        label="micro")
    slots = [SlotInfo(orbit=0, family="micro", resonance=(1, 1), phase=j / n,
                      stability=max(1.0, 1.0 / (1.0 - micro.costs[j]) - 10.0))
             for j in range(n)]
    tensor = VisibilityTensor.from_dense(micro.tensor, demand.demand)
    return Instance(tensor=tensor, costs=micro.costs, p=micro.p,
                    demand=demand, slots=slots, geometry=None)


def greedy_trap_instance() -> MicroInstance:
    """Three-slot instance where one-shot greedy allocation is suboptimal.

    At the single time step, slot 0 sees {0,1,2} with direction 0 or {3,4}
    with direction 1; slot 1 sees {0,1,2} only; slot 2 nothing.  Greedy gives
    slot 0 the 3-target direction first, leaving slot 1 nothing new (3 total);
    allocating slot 1 the triple and slot 0 the pair covers all 5.
    """
    m, n, l, q = 2, 3, 1, 5
    tensor = np.zeros((m, n, l, q), dtype=bool)
    tensor[0, 0, 0, [0, 1, 2]] = True
    tensor[1, 0, 0, [3, 4]] = True
    tensor[0, 1, 0, [0, 1, 2]] = True
    costs = np.array([0.95, 0.95, 0.95])
    return MicroInstance(tensor=tensor, costs=costs, p=2)
