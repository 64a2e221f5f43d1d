"""Lagrangean method for the time-expanded p-median instance.

Dualizes the single-direction and coverage-linking constraints, solves the
per-slot subproblems analytically, repairs the relaxed allocation into a
feasible schedule (greedy or full-factorial per time step), improves it by
intra-/inter-orbit slot swaps, and updates the multipliers by a projected
subgradient step.  All tie-breaks are by lowest index so single-threaded
runs are bit-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from itertools import permutations

import numpy as np

from .errors import ConfigError, NoFeasibleSolution, PermutationCapExceeded
from .model import (
    Instance,
    Schedule,
    Solution,
    VisibilityTensor,
    make_solution,
)

STRATEGIES = ("greedy", "full_factorial_greedy")


@dataclass(frozen=True)
class LmConfig:
    """Hyperparameters of the Lagrangean method (defaults per scenario table)."""

    max_iterations: int = 30
    gap_tol: float = 0.01
    max_stagnant: int = 10
    stagnant_to_reduce_step: int = 5
    c_alpha: int = 4
    stagnant_to_inter_swap: int = 4
    strategy: str = "full_factorial_greedy"
    time_limit_s: float | None = None
    mu0: float = 2.0
    step_reduction: float = 0.5
    permutation_cap: int = 8
    use_memo: bool = True
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.c_alpha < 2 or self.c_alpha % 2:
            raise ConfigError("c_alpha must be even and >= 2")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")


@dataclass
class Multipliers:
    """Non-negative duals: lam[j, t] on single-direction rows, eta[t, k] on
    coverage-linking rows."""

    lam: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        if np.any(self.lam < 0.0) or np.any(self.eta < 0.0):
            raise ConfigError("multipliers must be non-negative")


def initial_multipliers(instance: Instance) -> Multipliers:
    """lam = 0, eta = 1: subproblem coefficients start as raw coverage counts
    and the relaxed theta starts all-zero (strict eta < 1 rule)."""
    tensor = instance.tensor
    return Multipliers(lam=np.zeros((tensor.n, tensor.l)),
                       eta=np.ones((tensor.l, tensor.q)))


@dataclass(frozen=True)
class RelaxedSolution:
    """Optimal solution of the relaxed problem for fixed multipliers."""

    slots: tuple[int, ...]
    schedules: dict[tuple[int, int], tuple[int, ...]]
    theta: np.ndarray = dc_field(repr=False)
    z: float
    per_slot: np.ndarray = dc_field(repr=False)
    selected_groups: np.ndarray = dc_field(repr=False)


def _group_coefficients(tensor: VisibilityTensor, eta: np.ndarray) -> np.ndarray:
    """Per (j, t, i) group: sum of eta[t, k] over the group's targets."""
    if tensor.n_entries == 0:
        return np.zeros(0)
    weights = eta[tensor.entry_t, tensor.entry_k]
    return np.add.reduceat(weights, tensor.group_start[:-1])


def subproblem(j: int, multipliers: Multipliers, tensor: VisibilityTensor,
               costs: np.ndarray) -> tuple[float, dict[int, tuple[int, ...]]]:
    """Reference single-slot subproblem (the vectorized path must agree).

    A direction (i, t) is selected when its coefficient
    sum_k eta[t, k] M[i, j, t, k] - lam[j, t] is strictly positive; the
    returned value assumes the slot is built.
    """
    lam, eta = multipliers.lam, multipliers.eta
    lo = int(np.searchsorted(tensor.group_j, j, side="left"))
    hi = int(np.searchsorted(tensor.group_j, j, side="right"))
    z = -costs[j] / tensor.l + lam[j].sum()
    schedule: dict[int, list[int]] = {}
    for g in range(lo, hi):
        t = int(tensor.group_t[g])
        ks = tensor.entry_k[tensor.group_start[g]:tensor.group_start[g + 1]]
        value = float(eta[t, ks].sum()) - lam[j, t]
        if value > 0.0:
            z += value
            schedule.setdefault(t, []).append(int(tensor.group_i[g]))
    return z, {t: tuple(dirs) for t, dirs in schedule.items()}


def solve_relaxed(multipliers: Multipliers, instance: Instance) -> RelaxedSolution:
    """Relaxed optimum: per-slot subproblems, then keep the p best slots.

    theta[t, k] = 1 iff eta[t, k] < 1.  Slot ranking ties break toward the
    cheaper facility, then the lower index.
    """
    tensor = instance.tensor
    lam, eta = multipliers.lam, multipliers.eta
    coef = _group_coefficients(tensor, eta)
    value = coef - lam[tensor.group_j, tensor.group_t]
    positive = value > 0.0
    per_slot = np.zeros(tensor.n)
    if positive.any():
        np.add.at(per_slot, tensor.group_j[positive], value[positive])
    per_slot += -instance.costs / tensor.l + lam.sum(axis=1)
    order = np.lexsort((np.arange(tensor.n), instance.costs, -per_slot))
    winners = np.sort(order[:instance.p])
    winner_mask = np.zeros(tensor.n, dtype=bool)
    winner_mask[winners] = True
    selected = positive & winner_mask[tensor.group_j]
    schedules: dict[tuple[int, int], list[int]] = {}
    for g in np.flatnonzero(selected):
        key = (int(tensor.group_j[g]), int(tensor.group_t[g]))
        schedules.setdefault(key, []).append(int(tensor.group_i[g]))
    theta = eta < 1.0
    z = float((1.0 - eta)[theta].sum()) + float(per_slot[winners].sum())
    return RelaxedSolution(
        slots=tuple(int(j) for j in winners),
        schedules={k: tuple(v) for k, v in schedules.items()},
        theta=theta, z=z, per_slot=per_slot, selected_groups=selected)


def _bits_to_count(bits: int) -> int:
    return bits.bit_count()


def _leftover_direction(bitsets: dict[int, int]) -> int:
    """Direction for a slot with no marginal gain: maximize total coverage,
    falling back to the first direction."""
    best_i, best_total = 0, 0
    for i in sorted(bitsets):
        total = bitsets[i].bit_count()
        if total > best_total:
            best_i, best_total = i, total
    return best_i


def greedy_allocation(t: int, tensor: VisibilityTensor, pool: list[int],
                      uncovered: int) -> dict[int, int]:
    """One-shot greedy repair at step t.

    Repeatedly allocates the (slot, direction) pair covering the most
    still-uncovered targets (ties to the lowest slot, then direction) until
    the pool or the uncovered set empties or no pair gains; leftover slots
    get their max-total-coverage direction so the schedule stays total.
    """
    alloc: dict[int, int] = {}
    remaining = sorted(pool)
    while remaining and uncovered:
        best = None
        for j in remaining:
            for i, bits in sorted(tensor.covered_bitsets(j, t).items()):
                gain = (bits & uncovered).bit_count()
                if best is None or gain > best[0]:
                    best = (gain, j, i, bits)
        if best is None or best[0] <= 0:
            break
        _, j, i, bits = best
        alloc[j] = i
        uncovered &= ~bits
        remaining.remove(j)
    for j in remaining:
        alloc[j] = _leftover_direction(tensor.covered_bitsets(j, t))
    return alloc


def full_factorial_allocation(t: int, tensor: VisibilityTensor, pool: list[int],
                              uncovered: int, cap: int = 8) -> dict[int, int]:
    """Repair at step t by trying every allocation order of the pool.

    Each permutation allocates its slots greedily in order; the permutation
    covering the most new targets wins (ties to the lexicographically first).
    Raises PermutationCapExceeded beyond `cap` slots (factorial growth).
    """
    pool = sorted(pool)
    if len(pool) > cap:
        raise PermutationCapExceeded(
            f"{len(pool)} unallocated slots exceed the cap of {cap}")
    gain_cache: dict[tuple[int, int], tuple[int, int]] = {}

    def best_direction(j: int, mask: int) -> tuple[int, int]:
        key = (j, mask)
        hit = gain_cache.get(key)
        if hit is not None:
            return hit
        best_i, best_bits, best_gain = 0, 0, -1
        for i, bits in sorted(tensor.covered_bitsets(j, t).items()):
            gain = (bits & mask).bit_count()
            if gain > best_gain:
                best_i, best_bits, best_gain = i, bits, gain
        out = (best_i, best_bits)
        gain_cache[key] = out
        return out

    start_count = uncovered.bit_count()
    best = None
    for perm in permutations(pool):
        mask = uncovered
        alloc: dict[int, int] = {}
        for j in perm:
            if mask == 0:
                break
            i, bits = best_direction(j, mask)
            alloc[j] = i
            mask &= ~bits
        delta = start_count - mask.bit_count()
        if best is None or delta > best[0]:
            best = (delta, alloc)
    alloc = dict(best[1]) if best else {}
    for j in pool:
        if j not in alloc:
            alloc[j] = _leftover_direction(tensor.covered_bitsets(j, t))
    return alloc


def heuristic_feasible_allocation(relaxed_schedules,
                                  active_slots,
                                  tensor: VisibilityTensor,
                                  strategy: str = "full_factorial_greedy",
                                  permutation_cap: int = 8
                                  ) -> tuple[Schedule, np.ndarray]:
    """Repair a relaxed allocation into a feasible schedule (Algorithm shape:
    keep slots already selecting exactly one direction, reallocate the rest
    per time step, then recompute the coverage indicators).

    With an empty relaxed allocation this is a pure strategy allocation of
    `active_slots`, which is what the slot-set evaluator and the swap
    heuristic use.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    active = sorted(int(j) for j in active_slots)
    if not active:
        raise ConfigError("active slot set is empty")
    schedule: Schedule = {}
    full_mask = (1 << tensor.q) - 1
    for t in range(tensor.l):
        uncovered = full_mask
        pool = []
        for j in active:
            dirs = relaxed_schedules.get((j, t), ())
            if len(dirs) == 1:
                i = int(dirs[0])
                schedule[(j, t)] = i
                uncovered &= ~tensor.covered_bitsets(j, t).get(i, 0)
            else:
                pool.append(j)
        if not pool:
            continue
        if strategy == "greedy":
            alloc = greedy_allocation(t, tensor, pool, uncovered)
        else:
            try:
                alloc = full_factorial_allocation(t, tensor, pool, uncovered,
                                                  permutation_cap)
            except PermutationCapExceeded:
                alloc = greedy_allocation(t, tensor, pool, uncovered)
        for j, i in alloc.items():
            schedule[(j, t)] = i
    theta = np.zeros((tensor.l, tensor.q), dtype=bool)
    for (j, t), i in schedule.items():
        ks = tensor.covered_targets(i, j, t)
        if ks.size:
            theta[t, ks] = True
    return schedule, theta


@dataclass(frozen=True)
class NeighborhoodIndex:
    """Per-slot swap candidates: same-orbit phase neighbors and the best
    aligned slot on each other orbit of equal resonance."""

    intra: dict[int, tuple[int, ...]]
    inter: dict[int, tuple[int, ...]]


def build_neighborhoods(instance: Instance, c_alpha: int = 4) -> NeighborhoodIndex:
    """Construct both neighborhood kinds.

    Intra-orbit: the c_alpha slots on the same orbit closest in phase
    (circular distance), ties to the lower slot index.  Inter-orbit: for
    each other orbit with the same M:N resonance, the slot whose
    line-of-sight/Sun alignment score against the demand-averaged target at
    the reference epoch is closest to that of the source slot; requires
    instance geometry, otherwise empty.
    """
    if c_alpha < 2 or c_alpha % 2:
        raise ConfigError("c_alpha must be even and >= 2")
    slots = instance.slots
    n = len(slots)
    by_orbit: dict[int, list[int]] = {}
    for j, info in enumerate(slots):
        by_orbit.setdefault(info.orbit, []).append(j)

    intra: dict[int, tuple[int, ...]] = {}
    for j, info in enumerate(slots):
        mates = by_orbit[info.orbit]
        dists = []
        for other in mates:
            if other == j:
                continue
            d = abs(slots[other].phase - info.phase)
            dists.append((min(d, 1.0 - d), other))
        dists.sort()
        intra[j] = tuple(other for _, other in dists[:c_alpha])

    inter: dict[int, tuple[int, ...]] = {j: () for j in range(n)}
    geo = instance.geometry
    if geo is not None:
        los = geo.mean_target[None, :] - geo.slot_positions
        los /= np.linalg.norm(los, axis=1)[:, None]
        sun_los = geo.mean_target - geo.sun_position
        sun_los /= np.linalg.norm(sun_los)
        score = los @ sun_los
        orbit_of = np.array([info.orbit for info in slots])
        resonance_of = {info.orbit: info.resonance for info in slots}
        for j, info in enumerate(slots):
            picks = []
            for orbit, mates in sorted(by_orbit.items()):
                if orbit == info.orbit or resonance_of[orbit] != info.resonance:
                    continue
                gaps = np.abs(score[mates] - score[j])
                picks.append(int(mates[int(np.argmin(gaps))]))
            inter[j] = tuple(picks)
        del orbit_of
    return NeighborhoodIndex(intra=intra, inter=inter)


def neighborhood_swap(best: Solution,
                      neighbor_lists: dict[int, tuple[int, ...]],
                      evaluate,
                      deadline: float | None = None) -> Solution:
    """Try swapping each active slot for each of its neighbors.

    Candidate slot sets are evaluated with `evaluate` (a pure, usually
    memoized map from a slot tuple to a Solution); a swap is kept only when
    it strictly improves the objective.  Never returns a worse solution.
    """
    base = best.slots
    base_set = set(base)
    out = best
    for j_out in base:
        for j_in in neighbor_lists.get(j_out, ()):
            if j_in in base_set:
                continue
            if deadline is not None and time.monotonic() >= deadline:
                return out
            candidate = tuple(sorted(base_set - {j_out} | {j_in}))
            trial = evaluate(candidate)
            if trial.objective > out.objective:
                out = trial
    return out


def update_multipliers(multipliers: Multipliers, relaxed: RelaxedSolution,
                       z_lh: float, mu: float, instance: Instance,
                       epsilon: float = 1e-12) -> Multipliers:
    """Projected subgradient step.

    Step size s = mu (Z_LR - Z_LH) / (|g_lam+|^2 + |g_eta+|^2 + eps) where
    g+ keeps only the positive (violated) components; both multiplier blocks
    are clipped back to >= 0 after the move.
    """
    if relaxed.z < z_lh - 1e-9:
        raise ConfigError("upper bound below lower bound in multiplier update")
    tensor = instance.tensor
    counts = np.zeros(tensor.n * tensor.l)
    if relaxed.selected_groups.any():
        key = (tensor.group_j.astype(np.int64) * tensor.l + tensor.group_t)
        np.add.at(counts, key[relaxed.selected_groups], 1.0)
    g_lam = counts.reshape(tensor.n, tensor.l) - 1.0
    cover = np.zeros(tensor.l * tensor.q)
    sel_entries = relaxed.selected_groups[tensor.entry_group]
    if sel_entries.any():
        ekey = (tensor.entry_t.astype(np.int64) * tensor.q + tensor.entry_k)
        np.add.at(cover, ekey[sel_entries], 1.0)
    g_eta = relaxed.theta.astype(float) - cover.reshape(tensor.l, tensor.q)
    denom = (np.square(np.clip(g_lam, 0.0, None)).sum()
             + np.square(np.clip(g_eta, 0.0, None)).sum() + epsilon)
    step = mu * (relaxed.z - z_lh) / denom
    return Multipliers(lam=np.maximum(0.0, multipliers.lam + step * g_lam),
                       eta=np.maximum(0.0, multipliers.eta + step * g_eta))


@dataclass
class LmState:
    """Mutable iteration state of the Lagrangean method."""

    multipliers: Multipliers
    best_lower: Solution | None = None
    best_upper: float = np.inf
    mu: float = 2.0
    iteration: int = 0
    no_improve: int = 0
    memo: dict[tuple[int, ...], Solution] = dc_field(default_factory=dict)


def run(instance: Instance, config: LmConfig = LmConfig()
        ) -> tuple[Solution, list[tuple[float, float]]]:
    """Full Lagrangean loop; returns the best feasible solution and the
    per-iteration (upper bound, best lower bound) history.

    Stops on relative gap <= gap_tol (floored denominator), the iteration
    cap, a stagnation cap, or the wall-clock limit; at least one full
    iteration always runs.
    """
    if instance.p > instance.n:
        raise NoFeasibleSolution(f"p = {instance.p} exceeds n = {instance.n}")
    tensor = instance.tensor
    start = time.monotonic()
    deadline = (start + config.time_limit_s
                if config.time_limit_s is not None else None)
    neighborhoods = build_neighborhoods(instance, config.c_alpha)
    state = LmState(multipliers=initial_multipliers(instance), mu=config.mu0)

    def evaluate(slot_set: tuple[int, ...]) -> Solution:
        if config.use_memo:
            hit = state.memo.get(slot_set)
            if hit is not None:
                return hit
        schedule, theta = heuristic_feasible_allocation(
            {}, slot_set, tensor, config.strategy, config.permutation_cap)
        sol = make_solution(slot_set, schedule, tensor, instance.costs,
                            instance.demand, theta=theta)
        if config.use_memo:
            state.memo[slot_set] = sol
        return sol

    history: list[tuple[float, float]] = []
    while state.iteration < config.max_iterations:
        state.iteration += 1
        prev_upper = state.best_upper
        prev_lower = state.best_lower.objective if state.best_lower else -np.inf
        relaxed = solve_relaxed(state.multipliers, instance)
        state.best_upper = min(state.best_upper, relaxed.z)
        schedule, theta = heuristic_feasible_allocation(
            relaxed.schedules, relaxed.slots, tensor, config.strategy,
            config.permutation_cap)
        sol = make_solution(relaxed.slots, schedule, tensor, instance.costs,
                            instance.demand, theta=theta)
        if state.best_lower is None or sol.objective > state.best_lower.objective:
            state.best_lower = sol
        lists = dict(neighborhoods.intra)
        if state.no_improve >= config.stagnant_to_inter_swap:
            lists = {j: neighborhoods.intra[j] + neighborhoods.inter[j]
                     for j in neighborhoods.intra}
        swapped = neighborhood_swap(state.best_lower, lists, evaluate, deadline)
        if swapped.objective > state.best_lower.objective:
            state.best_lower = swapped
        history.append((relaxed.z, state.best_lower.objective))
        improved = (state.best_upper < prev_upper
                    or state.best_lower.objective > prev_lower)
        state.no_improve = 0 if improved else state.no_improve + 1
        gap = ((state.best_upper - state.best_lower.objective)
               / max(1.0, abs(state.best_upper)))
        if gap <= config.gap_tol:
            break
        if state.no_improve >= config.max_stagnant:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        if (state.no_improve >= config.stagnant_to_reduce_step
                and state.no_improve % config.stagnant_to_reduce_step == 0):
            state.mu *= config.step_reduction
        state.multipliers = update_multipliers(
            state.multipliers, relaxed, state.best_lower.objective, state.mu,
            instance, config.epsilon)
    return state.best_lower, history
