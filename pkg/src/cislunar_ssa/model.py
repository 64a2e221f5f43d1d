"""Visibility tensor assembly, the time-expanded p-median instance, solution
objects, and MPS export/import for external MILP solvers.

Index conventions follow the optimization model: pointing directions
i = 1..m, candidate slots j = 1..n, time steps t = 1..l, targets k = 1..q.
Internally everything is 0-based; the 1-based names appear only in MPS files
and solution files.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import illumination as ill
from .demand import DemandSet
from .dynamics import EARTH_MOON, Cr3bpSystem, LpoRecord, SlotEphemeris
from .errors import (
    ConfigError,
    DegenerateGeometry,
    EmptyDemand,
    InfeasibleSolution,
    ParseError,
)

Schedule = dict[tuple[int, int], int]


class VisibilityTensor:
    """Sparse boolean visibility over (direction i, slot j, step t, target k).

    Entries are stored as parallel index arrays sorted by (j, t, i, k), with
    run-length group structure over (j, t, i).  Two query surfaces exist for
    the heuristics: per-(j, t) covered-target bitsets and a lazy per-(t, k)
    list of covering (i, j) pairs.
    """

    def __init__(self, dims, entry_i, entry_j, entry_t, entry_k):
        self.m, self.n, self.l, self.q = (int(v) for v in dims)
        order = np.lexsort((np.asarray(entry_k), np.asarray(entry_i),
                            np.asarray(entry_t), np.asarray(entry_j)))
        self.entry_i = np.asarray(entry_i, dtype=np.int32)[order]
        self.entry_j = np.asarray(entry_j, dtype=np.int32)[order]
        self.entry_t = np.asarray(entry_t, dtype=np.int32)[order]
        self.entry_k = np.asarray(entry_k, dtype=np.int32)[order]
        for arr, bound in ((self.entry_i, self.m), (self.entry_j, self.n),
                           (self.entry_t, self.l), (self.entry_k, self.q)):
            if arr.size and (arr.min() < 0 or arr.max() >= bound):
                raise ConfigError("tensor entry index out of range")
        if self.entry_i.size:
            key = ((self.entry_j.astype(np.int64) * self.l + self.entry_t) * self.m
                   + self.entry_i)
            boundary = np.flatnonzero(np.diff(key)) + 1
            self.group_start = np.concatenate(
                [[0], boundary, [key.size]]).astype(np.int64)
            first = self.group_start[:-1]
            self.group_j = self.entry_j[first].copy()
            self.group_t = self.entry_t[first].copy()
            self.group_i = self.entry_i[first].copy()
            self.entry_group = np.repeat(
                np.arange(first.size, dtype=np.int64), np.diff(self.group_start))
        else:
            self.group_start = np.zeros(1, dtype=np.int64)
            self.group_j = np.empty(0, dtype=np.int32)
            self.group_t = np.empty(0, dtype=np.int32)
            self.group_i = np.empty(0, dtype=np.int32)
            self.entry_group = np.empty(0, dtype=np.int64)
        self._group_jt_key = self.group_j.astype(np.int64) * self.l + self.group_t
        self.query_count = 0
        self._bitset_cache: dict[tuple[int, int], dict[int, int]] = {}
        self._tk_order = None
        self._tk_key = None

    @classmethod
    def from_dense(cls, dense: np.ndarray,
                   demand: np.ndarray | None = None) -> "VisibilityTensor":
        """Build from a dense boolean (m, n, l, q) array, masking D = 0."""
        dense = np.asarray(dense, dtype=bool)
        if dense.ndim != 4:
            raise ConfigError("dense tensor must be 4-dimensional")
        if demand is not None:
            dense = dense & np.asarray(demand, dtype=bool)[None, None, :, :]
        i, j, t, k = np.nonzero(dense)
        return cls(dense.shape, i, j, t, k)

    @property
    def dims(self):
        return (self.m, self.n, self.l, self.q)

    @property
    def n_entries(self) -> int:
        return int(self.entry_i.size)

    @property
    def density(self) -> float:
        total = self.m * self.n * self.l * self.q
        return self.n_entries / total if total else 0.0

    @property
    def n_groups(self) -> int:
        return int(self.group_j.size)

    def _group_range(self, j: int, t: int) -> tuple[int, int]:
        key = j * self.l + t
        lo = int(np.searchsorted(self._group_jt_key, key, side="left"))
        hi = int(np.searchsorted(self._group_jt_key, key, side="right"))
        return lo, hi

    def covered_targets(self, i: int, j: int, t: int) -> np.ndarray:
        """Target indices visible from slot j pointing at i at step t."""
        self.query_count += 1
        lo, hi = self._group_range(j, t)
        for g in range(lo, hi):
            if self.group_i[g] == i:
                return self.entry_k[self.group_start[g]:self.group_start[g + 1]]
        return np.empty(0, dtype=np.int32)

    def covered_bitsets(self, j: int, t: int) -> dict[int, int]:
        """Per-direction covered-target bitsets (bit k set when visible)."""
        cached = self._bitset_cache.get((j, t))
        if cached is not None:
            return cached
        self.query_count += 1
        lo, hi = self._group_range(j, t)
        out = {}
        for g in range(lo, hi):
            ks = self.entry_k[self.group_start[g]:self.group_start[g + 1]]
            mask = np.zeros(self.q, dtype=bool)
            mask[ks] = True
            bits = int.from_bytes(
                np.packbits(mask, bitorder="little").tobytes(), "little")
            out[int(self.group_i[g])] = bits
        self._bitset_cache[(j, t)] = out
        return out

    def contains(self, i: int, j: int, t: int, k: int) -> bool:
        lo, hi = self._group_range(j, t)
        for g in range(lo, hi):
            if self.group_i[g] == i:
                ks = self.entry_k[self.group_start[g]:self.group_start[g + 1]]
                pos = int(np.searchsorted(ks, k))
                return pos < ks.size and ks[pos] == k
        return False

    def covering_pairs(self, t: int, k: int) -> list[tuple[int, int]]:
        """All (i, j) with an entry at (t, k); index built lazily."""
        if self._tk_order is None:
            self._tk_order = np.lexsort((self.entry_j, self.entry_i,
                                         self.entry_k, self.entry_t))
            key = self.entry_t.astype(np.int64) * self.q + self.entry_k
            self._tk_key = key[self._tk_order]
        key = t * self.q + k
        lo = int(np.searchsorted(self._tk_key, key, side="left"))
        hi = int(np.searchsorted(self._tk_key, key, side="right"))
        idx = self._tk_order[lo:hi]
        return [(int(i), int(j)) for i, j in zip(self.entry_i[idx], self.entry_j[idx])]


def _tensor_block(t_range, positions, targets, demand, dirs, cos_half, moon,
                  moon_r, sun_positions, optics, m_crit, length_unit_km):
    """Visibility entries for a block of time steps (vectorized over j, k)."""
    out_i, out_j, out_t, out_k = [], [], [], []
    for t in t_range:
        dmask = demand[t]
        if not dmask.any():
            continue
        r_obs = positions[:, t, :]
        dvec = targets[None, :, :] - r_obs[:, None, :]
        dist = np.linalg.norm(dvec, axis=2)
        if np.any(dist < 1e-12):
            raise DegenerateGeometry(f"slot coincides with a target at step {t + 1}")
        los = dvec / dist[:, :, None]
        # Moon occultation: line of sight inside the angular radius and the
        # target beyond the Moon
        to_moon = moon[None, :] - r_obs
        d_moon = np.linalg.norm(to_moon, axis=1)
        cos_sep = np.clip(
            np.einsum("nc,nqc->nq", to_moon / d_moon[:, None], los), -1.0, 1.0)
        phi_crit = np.arcsin(np.clip(moon_r / d_moon, 0.0, 1.0))[:, None]
        occulted = (np.arccos(cos_sep) < phi_crit) & (dist > d_moon[:, None])
        # apparent magnitude at this step's Sun position
        l_sk = targets - sun_positions[t]
        l_sk /= np.linalg.norm(l_sk, axis=1)[:, None]
        phase = np.arccos(np.clip(np.einsum("nqc,qc->nq", los, l_sk), -1.0, 1.0))
        bracket = (optics.spec_reflectance / 4.0
                   + optics.diff_reflectance * ill.diffuse_phase_function(phase))
        flux = (optics.diameter_km / (dist * length_unit_km)) ** 2 * bracket
        with np.errstate(divide="ignore"):
            mag = optics.m_sun - 2.5 * np.log10(flux)
        base = ~occulted & (mag <= m_crit) & dmask[None, :]
        if not base.any():
            continue
        for i, direction in enumerate(dirs):
            in_cone = np.einsum("nqc,c->nq", dvec, direction) >= cos_half * dist
            js, ks = np.nonzero(base & in_cone)
            if js.size:
                out_i.append(np.full(js.size, i, dtype=np.int32))
                out_j.append(js.astype(np.int32))
                out_t.append(np.full(js.size, t, dtype=np.int32))
                out_k.append(ks.astype(np.int32))
    return out_i, out_j, out_t, out_k


def build_visibility_tensor(ephemeris: list[SlotEphemeris],
                            demand: DemandSet,
                            pointing: ill.PointingSet,
                            sensor: ill.SensorParams,
                            optics: ill.TargetOptics,
                            sun: ill.SunModel,
                            dt: float,
                            system: Cr3bpSystem = EARTH_MOON,
                            threads: int = 1) -> VisibilityTensor:
    """Evaluate the visibility flag for every (i, j, t, k) with demand.

    Step t (1-based in the model) corresponds to epoch (t-1) * dt.  Work is
    vectorized over slots and targets; `threads` > 1 splits the time axis,
    which cannot change the result (blocks are merged in time order).
    """
    n = len(ephemeris)
    steps, q = demand.steps, demand.q
    m = len(pointing)
    if n == 0:
        raise ConfigError("ephemeris is empty")
    if any(e.positions.shape[0] < steps for e in ephemeris):
        raise ConfigError("ephemeris horizon shorter than demand horizon")
    positions = np.stack([e.positions[:steps] for e in ephemeris])
    targets = demand.targets_lu(system)
    moon = system.primary_positions[1]
    moon_r = sensor.moon_radius_km / system.length_unit_km
    cos_half = np.cos(np.radians(sensor.fov_deg) / 2.0)
    sun_positions = ill.sun_position(np.arange(steps) * dt, sun)
    args = (positions, targets, demand.demand, pointing.directions, cos_half,
            moon, moon_r, sun_positions, optics, sensor.m_crit,
            system.length_unit_km)
    if threads > 1:
        blocks = np.array_split(np.arange(steps), min(threads, steps))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _tensor_block(b, *args), blocks))
    else:
        results = [_tensor_block(range(steps), *args)]
    cat = [np.concatenate([arr for res in results for arr in res[c]])
           if any(res[c] for res in results) else np.empty(0, dtype=np.int32)
           for c in range(4)]
    return VisibilityTensor((m, n, steps, q), *cat)


@dataclass(frozen=True)
class SlotInfo:
    """Catalog metadata of one slot, used by neighborhoods and reporting."""

    orbit: int
    family: str
    resonance: tuple[int, int]
    phase: float
    stability: float

    @property
    def label(self) -> str:
        m, n = self.resonance
        return f"{self.family} ({m}:{n})"


def slot_table(catalog: list[LpoRecord],
               ephemeris: list[SlotEphemeris]) -> list[SlotInfo]:
    return [
        SlotInfo(orbit=e.slot_orbit,
                 family=catalog[e.slot_orbit].family.value,
                 resonance=catalog[e.slot_orbit].resonance,
                 phase=e.phase_offset,
                 stability=catalog[e.slot_orbit].stability)
        for e in ephemeris
    ]


def facility_costs(catalog: list[LpoRecord],
                   ephemeris: list[SlotEphemeris]) -> np.ndarray:
    """Per-slot cost 1 - 1/(nu + 10); maps station-keeping cost into (0, 1)."""
    nu = np.array([catalog[e.slot_orbit].stability for e in ephemeris])
    if np.any(nu < 1.0):
        raise ConfigError("stability indices must be >= 1")
    return 1.0 - 1.0 / (nu + 10.0)


@dataclass(frozen=True)
class InstanceGeometry:
    """Reference-epoch geometry used by the inter-orbit neighborhoods."""

    slot_positions: np.ndarray  # (n, 3) at the first time step, LU
    mean_target: np.ndarray     # (3,) demand-averaged target position, LU
    sun_position: np.ndarray    # (3,) Sun at the reference epoch, LU


@dataclass(frozen=True)
class Instance:
    """One TE-p-MP instance: tensor, facility costs, and p."""

    tensor: VisibilityTensor
    costs: np.ndarray
    p: int
    demand: DemandSet
    slots: list[SlotInfo]
    geometry: InstanceGeometry | None = None

    def __post_init__(self):
        n = self.tensor.n
        if not 1 <= self.p <= n:
            raise ConfigError(f"p must be in [1, {n}], got {self.p}")
        costs = np.asarray(self.costs, dtype=float)
        if costs.shape != (n,):
            raise ConfigError("costs must have one entry per slot")
        if np.any(costs <= 0.0) or np.any(costs >= 1.0):
            raise ConfigError("facility costs must lie in (0, 1)")
        if len(self.slots) != n:
            raise ConfigError("slot metadata must have one entry per slot")
        if (self.demand.steps, self.demand.q) != (self.tensor.l, self.tensor.q):
            raise ConfigError("demand dimensions disagree with the tensor")
        object.__setattr__(self, "costs", costs)

    @property
    def n(self) -> int:
        return self.tensor.n


def assemble_instance(catalog: list[LpoRecord],
                      ephemeris: list[SlotEphemeris],
                      demand: DemandSet,
                      pointing: ill.PointingSet,
                      sensor: ill.SensorParams,
                      optics: ill.TargetOptics,
                      sun: ill.SunModel,
                      dt: float,
                      p: int,
                      system: Cr3bpSystem = EARTH_MOON,
                      threads: int = 1) -> Instance:
    tensor = build_visibility_tensor(ephemeris, demand, pointing, sensor,
                                     optics, sun, dt, system, threads)
    geometry = InstanceGeometry(
        slot_positions=np.stack([e.positions[0] for e in ephemeris]),
        mean_target=demand.targets_lu(system).mean(axis=0),
        sun_position=ill.sun_position(0.0, sun),
    )
    return Instance(tensor=tensor, costs=facility_costs(catalog, ephemeris),
                    p=p, demand=demand, slots=slot_table(catalog, ephemeris),
                    geometry=geometry)


@dataclass(frozen=True)
class Solution:
    """Chosen slots, pointing schedule, coverage indicators, and scores."""

    slots: tuple[int, ...]
    schedule: Schedule
    theta: np.ndarray = field(repr=False)
    objective: float
    coverage: float


def theta_from_schedule(schedule: Schedule, tensor: VisibilityTensor) -> np.ndarray:
    """Coverage indicators: theta[t, k] = 1 iff some allocation sees (t, k)."""
    theta = np.zeros((tensor.l, tensor.q), dtype=bool)
    for (j, t), i in schedule.items():
        ks = tensor.covered_targets(i, j, t)
        if ks.size:
            theta[t, ks] = True
    return theta


def objective_value(theta_total: float, slots, costs: np.ndarray,
                    steps: int) -> float:
    """Z = sum(theta) - (1/l) * sum of chosen facility costs."""
    return float(theta_total) - float(costs[list(slots)].sum()) / steps


def coverage_fraction(theta: np.ndarray, demand: DemandSet) -> float:
    """Fraction of demanded (t, k) pairs covered, in [0, 1]."""
    total = int(demand.demand.sum())
    if total == 0:
        raise EmptyDemand("demand matrix has no active entries")
    covered = int(np.count_nonzero(theta))
    return covered / total


def make_solution(slots, schedule: Schedule, tensor: VisibilityTensor,
                  costs: np.ndarray, demand: DemandSet,
                  theta: np.ndarray | None = None) -> Solution:
    if theta is None:
        theta = theta_from_schedule(schedule, tensor)
    z = objective_value(theta.sum(), slots, costs, tensor.l)
    return Solution(slots=tuple(sorted(int(j) for j in slots)),
                    schedule=dict(schedule), theta=theta, objective=z,
                    coverage=coverage_fraction(theta, demand))


def validate_solution(solution: Solution, instance: Instance) -> list[str]:
    """Constraint check; an empty list means feasible."""
    tensor = instance.tensor
    violations = []
    slots = solution.slots
    if len(set(slots)) != len(slots):
        violations.append("duplicate slot indices in Y")
    if len(slots) != instance.p:
        violations.append(f"|Y| = {len(slots)} but p = {instance.p}")
    chosen = set(slots)
    for j in slots:
        if not 0 <= j < tensor.n:
            violations.append(f"slot index {j} out of range")
    for (j, t), i in solution.schedule.items():
        if j not in chosen:
            violations.append(f"allocation on unchosen slot j={j} at t={t}")
        if not 0 <= t < tensor.l:
            violations.append(f"allocation time {t} out of range")
        if not 0 <= i < tensor.m:
            violations.append(f"direction index {i} out of range")
    if solution.theta.shape != (tensor.l, tensor.q):
        violations.append("theta has wrong shape")
        return violations
    expected = theta_from_schedule(solution.schedule, tensor)
    extra = solution.theta & ~expected
    missing = expected & ~solution.theta
    for t, k in zip(*np.nonzero(extra)):
        violations.append(f"theta[{t},{k}] set without a covering allocation")
        if len(violations) > 20:
            return violations
    for t, k in zip(*np.nonzero(missing)):
        violations.append(f"coverage of ({t},{k}) not reflected in theta")
        if len(violations) > 20:
            return violations
    return violations


def evaluate_objective(solution: Solution, instance: Instance) -> float:
    """Objective of a feasible solution; raises InfeasibleSolution otherwise."""
    violations = validate_solution(solution, instance)
    if violations:
        raise InfeasibleSolution(violations)
    return objective_value(solution.theta.sum(), solution.slots,
                           instance.costs, instance.tensor.l)


# -- MPS export / solution import ---------------------------------------------

VARIANTS = ("aggregate", "time_robust", "target_robust")


def _fmt(value: float) -> str:
    return format(value, ".12g")


class _MpsWriter:
    def __init__(self):
        self.rows: list[tuple[str, str]] = []
        self.cols: dict[str, list[tuple[str, float]]] = {}
        self.col_order: list[str] = []
        self.rhs: list[tuple[str, float]] = []
        self.bounds: list[str] = []

    def row(self, sense: str, name: str):
        self.rows.append((sense, name))

    def entry(self, col: str, row: str, coef: float):
        if col not in self.cols:
            self.cols[col] = []
            self.col_order.append(col)
        self.cols[col].append((row, coef))

    def render(self, name: str, comments: list[str], binaries: set[str]) -> str:
        width = max([8] + [len(c) for c in self.col_order]
                    + [len(r) for _, r in self.rows]) + 2
        lines = [f"* {c}" for c in comments]
        lines.append(f"NAME{'':10}{name}")
        lines.append("ROWS")
        lines.append(" N  OBJ")
        for sense, rname in self.rows:
            lines.append(f" {sense}  {rname}")
        lines.append("COLUMNS")
        marker_open = False
        for col in self.col_order:
            is_bin = col in binaries
            if is_bin and not marker_open:
                lines.append(f"    MARKER{'':{width - 6}}'MARKER'{'':17}'INTORG'")
                marker_open = True
            if not is_bin and marker_open:
                lines.append(f"    MARKER{'':{width - 6}}'MARKER'{'':17}'INTEND'")
                marker_open = False
            entries = self.cols[col]
            for a in range(0, len(entries), 2):
                pair = entries[a:a + 2]
                chunks = [f"    {col:<{width}}"]
                for rname, coef in pair:
                    chunks.append(f"{rname:<{width}}{_fmt(coef):<20}")
                lines.append("".join(chunks).rstrip())
        if marker_open:
            lines.append(f"    MARKER{'':{width - 6}}'MARKER'{'':17}'INTEND'")
        lines.append("RHS")
        for a in range(0, len(self.rhs), 2):
            pair = self.rhs[a:a + 2]
            chunks = [f"    {'RHS':<{width}}"]
            for rname, val in pair:
                chunks.append(f"{rname:<{width}}{_fmt(val):<20}")
            lines.append("".join(chunks).rstrip())
        lines.append("BOUNDS")
        lines.extend(self.bounds)
        lines.append("ENDATA")
        return "\n".join(lines) + "\n"


def x_name(i: int, j: int, t: int) -> str:
    return f"X_{i + 1}_{j + 1}_{t + 1}"


def y_name(j: int) -> str:
    return f"Y_{j + 1}"


def theta_name(t: int, k: int) -> str:
    return f"T_{t + 1}_{k + 1}"


def export_mps(instance: Instance, variant: str, path: str | Path) -> None:
    """Write the instance as a minimizing MPS model (objective negated).

    X variables exist only for (i, j, t) with at least one tensor entry
    (pointing anywhere else can never cover a demanded target, and idle is
    the absence of all X at (j, t)).  theta variables exist for demanded
    (t, k).  The robust variants add the scalar psi (worst time step) or phi
    (worst target) and their linking rows.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown MPS variant {variant!r}")
    tensor = instance.tensor
    steps, q = tensor.l, tensor.q
    w = _MpsWriter()
    groups = range(tensor.n_groups)
    jt_pairs = sorted({(int(j), int(t))
                       for j, t in zip(tensor.group_j, tensor.group_t)})
    demanded = [(int(t), int(k)) for t, k in zip(*np.nonzero(instance.demand.demand))]

    for j, t in jt_pairs:
        w.row("L", f"SD_{j + 1}_{t + 1}")
    w.row("E", "PMED")
    for g in groups:
        w.row("L", f"EX_{tensor.group_i[g] + 1}_{tensor.group_j[g] + 1}_"
                   f"{tensor.group_t[g] + 1}")
    for t, k in demanded:
        w.row("G", f"LK_{t + 1}_{k + 1}")
    if variant == "time_robust":
        for t in range(steps):
            w.row("G", f"RT_{t + 1}")
    elif variant == "target_robust":
        for k in range(q):
            w.row("G", f"RK_{k + 1}")

    # X columns (binary), in group order = sorted by (j, t, i)
    for g in groups:
        i, j, t = (int(tensor.group_i[g]), int(tensor.group_j[g]),
                   int(tensor.group_t[g]))
        col = x_name(i, j, t)
        w.entry(col, f"SD_{j + 1}_{t + 1}", 1.0)
        w.entry(col, f"EX_{i + 1}_{j + 1}_{t + 1}", 1.0)
        ks = tensor.entry_k[tensor.group_start[g]:tensor.group_start[g + 1]]
        for k in ks:
            w.entry(col, f"LK_{t + 1}_{int(k) + 1}", 1.0)
    # Y columns (binary)
    for j in range(tensor.n):
        col = y_name(j)
        w.entry(col, "OBJ", float(instance.costs[j]) / steps)
        w.entry(col, "PMED", 1.0)
    for g in groups:
        i, j, t = (int(tensor.group_i[g]), int(tensor.group_j[g]),
                   int(tensor.group_t[g]))
        w.entry(y_name(j), f"EX_{i + 1}_{j + 1}_{t + 1}", -1.0)
    # theta columns (continuous)
    for t, k in demanded:
        col = theta_name(t, k)
        if variant == "aggregate":
            w.entry(col, "OBJ", -1.0)
        w.entry(col, f"LK_{t + 1}_{k + 1}", -1.0)
        if variant == "time_robust":
            w.entry(col, f"RT_{t + 1}", 1.0)
        elif variant == "target_robust":
            w.entry(col, f"RK_{k + 1}", 1.0)
    if variant == "time_robust":
        w.entry("PSI", "OBJ", -1.0)
        for t in range(steps):
            w.entry("PSI", f"RT_{t + 1}", -1.0)
    elif variant == "target_robust":
        w.entry("PHI", "OBJ", -1.0)
        for k in range(q):
            w.entry("PHI", f"RK_{k + 1}", -1.0)

    for j, t in jt_pairs:
        w.rhs.append((f"SD_{j + 1}_{t + 1}", 1.0))
    w.rhs.append(("PMED", float(instance.p)))

    binaries = set()
    width = max([8] + [len(c) for c in w.col_order]) + 2
    for g in groups:
        col = x_name(int(tensor.group_i[g]), int(tensor.group_j[g]),
                     int(tensor.group_t[g]))
        binaries.add(col)
        w.bounds.append(f" BV {'BND':<{width}}{col}")
    for j in range(tensor.n):
        binaries.add(y_name(j))
        w.bounds.append(f" BV {'BND':<{width}}{y_name(j)}")
    for t, k in demanded:
        w.bounds.append(f" UP {'BND':<{width}}{theta_name(t, k):<{width}}{_fmt(1.0)}")
    if variant == "time_robust":
        w.bounds.append(f" UP {'BND':<{width}}{'PSI':<{width}}{_fmt(float(q))}")
    elif variant == "target_robust":
        w.bounds.append(f" UP {'BND':<{width}}{'PHI':<{width}}{_fmt(float(steps))}")

    comments = [
        f"TE-p-MP {variant} formulation (m={tensor.m}, n={tensor.n}, "
        f"l={steps}, q={q}, p={instance.p})",
        "Maximization model exported as its negation: minimize -Z.",
        "Recover the reported objective as Z = -(MPS optimal value).",
    ]
    Path(path).write_text(w.render(f"TEPMP_{variant.upper()}", comments, binaries))


def save_solution(solution: Solution, path: str | Path) -> None:
    """Write nonzero variable fixings as 'name value' lines."""
    lines = [f"{y_name(j)} 1" for j in solution.slots]
    lines += [f"{x_name(i, j, t)} 1"
              for (j, t), i in sorted(solution.schedule.items())]
    lines += [f"{theta_name(t, k)} 1"
              for t, k in zip(*np.nonzero(solution.theta))]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_binary(value_tok: str, lineno: int) -> bool:
    try:
        value = float(value_tok)
    except ValueError:
        raise ParseError(f"bad value {value_tok!r}", line=lineno) from None
    if abs(value) <= 1e-6:
        return False
    if abs(value - 1.0) <= 1e-6:
        return True
    raise ParseError(f"fractional value {value_tok!r}; binaries only",
                     line=lineno)


def import_solution(path: str | Path, instance: Instance) -> Solution:
    """Read a 'name value' solution file and validate it against the instance.

    Variable names follow the MPS export convention (1-based X_i_j_t, Y_j,
    T_t_k; PSI/PHI are accepted and ignored).  theta lines are optional;
    when absent theta is derived from the schedule.
    """
    tensor = instance.tensor
    slots = []
    alloc: dict[tuple[int, int], set[int]] = {}
    theta = None
    saw_theta = False
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", "*")):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'name value', got {line!r}", line=lineno)
        name, value_tok = parts
        fields = name.split("_")
        try:
            if fields[0] == "Y" and len(fields) == 2:
                j = int(fields[1]) - 1
                if not 0 <= j < tensor.n:
                    raise ParseError(f"slot index out of range in {name}",
                                     line=lineno)
                if _parse_binary(value_tok, lineno):
                    slots.append(j)
            elif fields[0] == "X" and len(fields) == 4:
                i, j, t = (int(v) - 1 for v in fields[1:])
                if not (0 <= i < tensor.m and 0 <= j < tensor.n
                        and 0 <= t < tensor.l):
                    raise ParseError(f"index out of range in {name}", line=lineno)
                if _parse_binary(value_tok, lineno):
                    alloc.setdefault((j, t), set()).add(i)
            elif fields[0] == "T" and len(fields) == 3:
                t, k = (int(v) - 1 for v in fields[1:])
                if not (0 <= t < tensor.l and 0 <= k < tensor.q):
                    raise ParseError(f"index out of range in {name}", line=lineno)
                saw_theta = True
                if theta is None:
                    theta = np.zeros((tensor.l, tensor.q), dtype=bool)
                theta[t, k] = _parse_binary(value_tok, lineno)
            elif name in ("PSI", "PHI"):
                continue
            else:
                raise ParseError(f"unknown variable {name!r}", line=lineno)
        except ValueError:
            raise ParseError(f"malformed variable name {name!r}",
                             line=lineno) from None
    multi = [jt for jt, dirs in alloc.items() if len(dirs) > 1]
    if multi:
        raise InfeasibleSolution(
            [f"multiple directions at (j={j}, t={t})" for j, t in multi])
    schedule = {jt: dirs.pop() for jt, dirs in alloc.items()}
    if not saw_theta:
        theta = theta_from_schedule(schedule, tensor)
    solution = make_solution(slots, schedule, tensor, instance.costs,
                             instance.demand, theta=theta)
    violations = validate_solution(solution, instance)
    if violations:
        raise InfeasibleSolution(violations)
    return solution
