"""Observation-demand target sets and their boolean demand matrices.

Target positions are stored in km (barycentric rotating frame); km is also
the unit of the demand file format, which keeps save/load round trips
bit-exact.  Use `DemandSet.targets_lu` for canonical-unit positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import EARTH_MOON, Cr3bpSystem, find_libration_points
from .errors import ConfigError, DimensionMismatch, ParseError

GEO_RADIUS_KM = 42164.0

SOI_WIDTH_KM = 6.43e4
SOI_COUNTS = (6, 4, 5)

CONE_FULL_ANGLE_DEG = 30.0
CONE_COUNTS = (16, 2, 9)

LET_SPANS_KM = (2.0e4, 1.0e5, 1.0e5)
LET_COUNTS = (3, 15, 15)

MONTH_STEPS = 60


@dataclass(frozen=True)
class DemandSet:
    """q targets plus the (steps x q) boolean demand matrix."""

    targets_km: np.ndarray
    demand: np.ndarray
    label: str = ""

    def __post_init__(self):
        targets = np.atleast_2d(np.asarray(self.targets_km, dtype=float))
        demand = np.atleast_2d(np.asarray(self.demand, dtype=bool))
        if targets.ndim != 2 or targets.shape[1] != 3:
            raise ConfigError("targets must have shape (q, 3)")
        if demand.shape[1] != targets.shape[0]:
            raise DimensionMismatch(
                f"demand has {demand.shape[1]} columns for {targets.shape[0]} targets")
        if not np.all(np.isfinite(targets)):
            raise ConfigError("target positions must be finite")
        idle = np.flatnonzero(~demand.any(axis=0))
        if idle.size:
            raise ConfigError(f"targets never demanded: {idle[:5].tolist()}")
        object.__setattr__(self, "targets_km", targets)
        object.__setattr__(self, "demand", demand)

    @property
    def q(self) -> int:
        return self.targets_km.shape[0]

    @property
    def steps(self) -> int:
        return self.demand.shape[0]

    def targets_lu(self, system: Cr3bpSystem = EARTH_MOON) -> np.ndarray:
        return self.targets_km / system.length_unit_km

    def __eq__(self, other):
        if not isinstance(other, DemandSet):
            return NotImplemented
        return (self.label == other.label
                and self.targets_km.shape == other.targets_km.shape
                and np.array_equal(self.targets_km, other.targets_km)
                and self.demand.shape == other.demand.shape
                and np.array_equal(self.demand, other.demand))


def _static(targets_km, steps, label):
    demand = np.ones((steps, len(targets_km)), dtype=bool)
    return DemandSet(targets_km=targets_km, demand=demand, label=label)


def soi_grid(steps: int,
             x_span_lu: tuple[float, float] | None = None,
             yz_halfwidth_km: float = SOI_WIDTH_KM / 2.0,
             counts: tuple[int, int, int] = SOI_COUNTS,
             system: Cr3bpSystem = EARTH_MOON) -> DemandSet:
    """Static grid spanning L1..L2 in x and +/- halfwidth in y and z."""
    if any(c < 1 for c in counts):
        raise ConfigError("grid counts must be >= 1")
    if x_span_lu is None:
        x_span_lu = find_libration_points(system)
    lo_km = x_span_lu[0] * system.length_unit_km
    hi_km = x_span_lu[1] * system.length_unit_km
    nx, ny, nz = counts
    xs = np.linspace(lo_km, hi_km, nx) if nx > 1 else np.array([(lo_km + hi_km) / 2.0])
    ys = np.linspace(-yz_halfwidth_km, yz_halfwidth_km, ny) if ny > 1 else np.array([0.0])
    zs = np.linspace(-yz_halfwidth_km, yz_halfwidth_km, nz) if nz > 1 else np.array([0.0])
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    targets = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    return _static(targets, steps, "soi")


def cone_of_shame(steps: int,
                  inner_radius_km: float = 2.0 * GEO_RADIUS_KM,
                  half_angle_deg: float = CONE_FULL_ANGLE_DEG / 2.0,
                  counts: tuple[int, int, int] = CONE_COUNTS,
                  system: Cr3bpSystem = EARTH_MOON) -> DemandSet:
    """Static targets filling the lunar exclusion cone.

    The cone's apex sits at the Earth's center with its axis along +x; axial
    stations run from `inner_radius_km` (geocentric) out to L2.  Each station
    carries one on-axis point plus `n_radial` rings of `n_azimuth` points,
    the outermost ring on the cone surface.
    """
    n_axial, n_radial, n_azimuth = counts
    if n_axial < 1 or n_radial < 0 or (n_radial > 0 and n_azimuth < 1):
        raise ConfigError("invalid cone discretization")
    _, l2 = find_libration_points(system)
    earth_x_km = -system.mu * system.length_unit_km
    outer_radius_km = (l2 + system.mu) * system.length_unit_km
    if inner_radius_km >= outer_radius_km:
        raise ConfigError("cone inner boundary lies beyond L2")
    tan_half = np.tan(np.radians(half_angle_deg))
    if n_axial > 1:
        stations = np.linspace(inner_radius_km, outer_radius_km, n_axial)
    else:
        stations = np.array([inner_radius_km])
    points = []
    for a in stations:
        points.append([earth_x_km + a, 0.0, 0.0])
        disc_radius = a * tan_half
        for ring in range(1, n_radial + 1):
            rho = disc_radius * ring / n_radial
            for zed in range(n_azimuth):
                ang = 2.0 * np.pi * zed / n_azimuth
                points.append([earth_x_km + a, rho * np.cos(ang), rho * np.sin(ang)])
    if not points:
        raise ConfigError("cone discretization produced no targets")
    return _static(np.array(points), steps, "cone")


def let_window(spans_km: tuple[float, float, float] = LET_SPANS_KM,
               counts: tuple[int, int, int] = LET_COUNTS,
               system: Cr3bpSystem = EARTH_MOON) -> np.ndarray:
    """Target grid of the low-energy-transfer transit window, centered at L2.

    Returns positions only (km); combine with `synthesize_let_demand` or a
    demand matrix from file to obtain a DemandSet.
    """
    if any(c < 1 for c in counts):
        raise ConfigError("grid counts must be >= 1")
    _, l2 = find_libration_points(system)
    center = np.array([l2 * system.length_unit_km, 0.0, 0.0])
    axes = []
    for span, count in zip(spans_km, counts):
        half = span / 2.0
        axes.append(np.linspace(-half, half, count) if count > 1 else np.array([0.0]))
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return center + np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def monthly_pattern(q: int, density: float, seed: int,
                    period: int = MONTH_STEPS) -> np.ndarray:
    """Seeded random monthly activation mask of shape (period, q).

    Each entry is active with probability `density`; columns that come out
    all-idle get one seeded step activated so every target is demanded.
    """
    if not 0.0 <= density <= 1.0:
        raise ConfigError("density must be in [0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((period, q)) < density
    for k in np.flatnonzero(~mask.any(axis=0)):
        mask[rng.integers(period), k] = True
    return mask


def synthesize_let_demand(targets_km: np.ndarray,
                          steps: int,
                          pattern: np.ndarray,
                          label: str = "let") -> DemandSet:
    """Demand matrix that repeats a monthly activation pattern.

    D[t, k] = pattern[t mod period, k]; the pattern period must divide the
    horizon so the demand is periodic over whole months.
    """
    pattern = np.atleast_2d(np.asarray(pattern, dtype=bool))
    period = pattern.shape[0]
    if steps % period != 0:
        raise ConfigError(f"pattern period {period} does not divide horizon {steps}")
    if pattern.shape[1] != len(targets_km):
        raise ConfigError("pattern column count must equal target count")
    demand = np.tile(pattern, (steps // period, 1))
    return DemandSet(targets_km=targets_km, demand=demand, label=label)


def save_demand(dset: DemandSet, path: str | Path) -> None:
    """Write a demand set as self-describing text (positions in km)."""
    lines = ["demandset v1", f"label {dset.label}", f"l {dset.steps}", f"q {dset.q}",
             "positions_km"]
    for row in dset.targets_km:
        # shortest round-trip decimal repr keeps load(save(x)) bit-exact
        lines.append(f"{float(row[0])!r} {float(row[1])!r} {float(row[2])!r}")
    lines.append("demand")
    for row in dset.demand:
        lines.append("".join("1" if v else "0" for v in row))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def load_demand(path: str | Path) -> DemandSet:
    """Read a demand set written by `save_demand`.

    Raises:
        ParseError: malformed header, positions, or demand rows.
        DimensionMismatch: row/column counts disagree with the header.
    """
    lines = Path(path).read_text().splitlines()
    pos = 0

    def take(expect: str | None = None) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of file", line=pos + 1)
        line = lines[pos]
        pos += 1
        if expect is not None and line.strip() != expect:
            raise ParseError(f"expected {expect!r}, got {line.strip()!r}", line=pos)
        return line.strip()

    take("demandset v1")
    label_line = take()
    if not label_line.startswith("label"):
        raise ParseError("expected label line", line=pos)
    label = label_line[5:].strip()
    try:
        steps = int(take().split()[1])
        q = int(take().split()[1])
    except (IndexError, ValueError):
        raise ParseError("malformed l/q header", line=pos) from None
    take("positions_km")
    targets = np.empty((q, 3))
    for k in range(q):
        raw = take()
        if raw in ("demand", "end"):
            raise DimensionMismatch(f"expected {q} position rows, got {k}")
        parts = raw.split()
        if len(parts) != 3:
            raise ParseError(f"expected 3 coordinates, got {len(parts)}", line=pos)
        try:
            targets[k] = [float(v) for v in parts]
        except ValueError:
            raise ParseError(f"bad coordinate in {raw!r}", line=pos) from None
    take("demand")
    demand = np.empty((steps, q), dtype=bool)
    for t in range(steps):
        raw = take()
        if raw == "end":
            raise DimensionMismatch(f"expected {steps} demand rows, got {t}")
        if len(raw) != q:
            raise DimensionMismatch(f"demand row {t + 1} has {len(raw)} columns, expected {q}")
        if set(raw) - {"0", "1"}:
            raise ParseError("demand rows must be 0/1 strings", line=pos)
        demand[t] = np.frombuffer(raw.encode(), dtype=np.uint8) == ord("1")
    take("end")
    return DemandSet(targets_km=targets, demand=demand, label=label)
