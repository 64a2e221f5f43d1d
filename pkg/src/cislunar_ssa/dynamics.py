"""Earth-Moon CR3BP dynamics, periodic-orbit catalog, and observer slot ephemerides.

States are plain numpy arrays ``[x, y, z, vx, vy, vz]`` in the barycentric
rotating frame, in canonical units (LU, LU/TU).  The rotating frame has +x
toward the Moon, +z along the orbital angular momentum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import ConfigError, EigenFailure, IntegrationFailure, ParseError, SingularState

_SINGULAR_RADIUS = 1e-12
# scipy refuses rtol below ~2.22e-14; clamp silently so tol=1e-14 is accepted
_RTOL_FLOOR = 2.3e-14

DAY_S = 86400.0
SYNODIC_DAYS = 29.5


@dataclass(frozen=True)
class Cr3bpSystem:
    """Canonical constants of a circular restricted three-body system.

    Attributes:
        mu: mass ratio of the smaller primary (Moon), dimensionless.
        length_unit_km: km per canonical length unit (Earth-Moon distance).
        time_unit_s: seconds per canonical time unit (1/mean motion).
        synodic_period_tu: Earth-Moon-Sun synodic period in TU.
    """

    mu: float
    length_unit_km: float
    time_unit_s: float
    synodic_period_tu: float

    def __post_init__(self):
        if not 0.0 < self.mu < 0.5:
            raise ConfigError(f"mass ratio must be in (0, 0.5), got {self.mu}")
        if self.length_unit_km <= 0.0 or self.time_unit_s <= 0.0:
            raise ConfigError("canonical units must be positive")
        expected = SYNODIC_DAYS * DAY_S / self.time_unit_s
        if abs(self.synodic_period_tu - expected) > 1e-9 * expected:
            raise ConfigError(
                f"synodic period {self.synodic_period_tu} TU inconsistent with "
                f"{SYNODIC_DAYS} days ({expected} TU)"
            )

    @property
    def primary_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Rotating-frame positions of Earth and Moon, LU."""
        return (np.array([-self.mu, 0.0, 0.0]),
                np.array([1.0 - self.mu, 0.0, 0.0]))

    def tu_to_hours(self, tu: float) -> float:
        return tu * self.time_unit_s / 3600.0


def _earth_moon() -> Cr3bpSystem:
    time_unit = 382981.2891290545
    return Cr3bpSystem(
        mu=0.01215058560962404,
        length_unit_km=389703.2648292776,
        time_unit_s=time_unit,
        synodic_period_tu=SYNODIC_DAYS * DAY_S / time_unit,
    )


EARTH_MOON = _earth_moon()


def _primary_offsets(state, mu):
    """Vectors from each primary to the spacecraft and their norms."""
    r = state[:3]
    r1 = r - np.array([-mu, 0.0, 0.0])
    r2 = r - np.array([1.0 - mu, 0.0, 0.0])
    return r1, r2, float(np.linalg.norm(r1)), float(np.linalg.norm(r2))


def cr3bp_derivative(state: np.ndarray, system: Cr3bpSystem = EARTH_MOON) -> np.ndarray:
    """Rotating-frame state derivative [v, a] at `state`.

    The acceleration combines both primaries' gravity with the centrifugal
    and Coriolis terms of the unit-rate rotating frame.

    Raises:
        SingularState: within 1e-12 LU of either primary.
    """
    state = np.asarray(state, dtype=float)
    if state.shape != (6,) or not np.all(np.isfinite(state)):
        raise ValueError("state must be a finite 6-vector")
    mu = system.mu
    r1, r2, d1, d2 = _primary_offsets(state, mu)
    if d1 < _SINGULAR_RADIUS or d2 < _SINGULAR_RADIUS:
        raise SingularState(f"state within {_SINGULAR_RADIUS} LU of a primary")
    x, y = state[0], state[1]
    vx, vy = state[3], state[4]
    grav = -(1.0 - mu) / d1**3 * r1 - mu / d2**3 * r2
    out = np.empty(6)
    out[:3] = state[3:]
    out[3] = grav[0] + x + 2.0 * vy
    out[4] = grav[1] + y - 2.0 * vx
    out[5] = grav[2]
    return out


def cr3bp_jacobian(state: np.ndarray, system: Cr3bpSystem = EARTH_MOON) -> np.ndarray:
    """6x6 Jacobian of the equations of motion at `state` (for the STM)."""
    mu = system.mu
    r1, r2, d1, d2 = _primary_offsets(np.asarray(state, dtype=float), mu)
    if d1 < _SINGULAR_RADIUS or d2 < _SINGULAR_RADIUS:
        raise SingularState(f"state within {_SINGULAR_RADIUS} LU of a primary")

    def hess(rv, d, gm):
        return gm * (3.0 * np.outer(rv, rv) / d**5 - np.eye(3) / d**3)

    uxx = hess(r1, d1, 1.0 - mu) + hess(r2, d2, mu)
    uxx[0, 0] += 1.0
    uxx[1, 1] += 1.0
    a = np.zeros((6, 6))
    a[:3, 3:] = np.eye(3)
    a[3:, :3] = uxx
    a[3, 4] = 2.0
    a[4, 3] = -2.0
    return a


def jacobi_constant(state: np.ndarray, system: Cr3bpSystem = EARTH_MOON) -> float:
    """Jacobi integral C = x^2 + y^2 + 2(1-mu)/r1 + 2 mu/r2 - v^2."""
    state = np.asarray(state, dtype=float)
    _, _, d1, d2 = _primary_offsets(state, system.mu)
    v2 = float(state[3:] @ state[3:])
    return state[0] ** 2 + state[1] ** 2 + 2.0 * (1.0 - system.mu) / d1 + 2.0 * system.mu / d2 - v2


def propagate(
    state0: np.ndarray,
    tof: float,
    system: Cr3bpSystem = EARTH_MOON,
    with_stm: bool = False,
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Propagate a state (optionally with the STM) for `tof` TU.

    Uses an adaptive high-order Runge-Kutta scheme (DOP853).  The STM is
    integrated through the variational equations; at tof = 0 it is identity.

    Args:
        state0: initial 6-state.
        tof: time of flight in TU, may be negative.
        with_stm: also integrate the 6x6 state-transition matrix.
        tol: relative tolerance, in [1e-14, 1e-6].

    Returns:
        (final state, STM or None).

    Raises:
        IntegrationFailure: solver did not reach `tof`.
        SingularState: trajectory hits a primary.
    """
    state0 = np.asarray(state0, dtype=float)
    if state0.shape != (6,) or not np.all(np.isfinite(state0)):
        raise ValueError("state0 must be a finite 6-vector")
    if not np.isfinite(tof):
        raise ValueError("tof must be finite")
    if not 1e-14 <= tol <= 1e-6:
        raise ValueError(f"tol must be in [1e-14, 1e-6], got {tol}")
    if tof == 0.0:
        return state0.copy(), (np.eye(6) if with_stm else None)

    rtol = max(tol, _RTOL_FLOOR)
    atol = rtol * 1e-3
    if with_stm:
        y0 = np.concatenate([state0, np.eye(6).ravel()])

        def rhs(_t, y):
            dy = np.empty(42)
            dy[:6] = cr3bp_derivative(y[:6], system)
            a = cr3bp_jacobian(y[:6], system)
            dy[6:] = (a @ y[6:].reshape(6, 6)).ravel()
            return dy
    else:
        y0 = state0

        def rhs(_t, y):
            return cr3bp_derivative(y, system)

    sol = solve_ivp(rhs, (0.0, tof), y0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=False)
    if not sol.success:
        raise IntegrationFailure(sol.message)
    yf = sol.y[:, -1]
    if with_stm:
        return yf[:6].copy(), yf[6:].reshape(6, 6).copy()
    return yf.copy(), None


def _dense_revolution(state0, period, system, tol=1e-12):
    """One full revolution with a high-order dense-output interpolant."""
    rtol = max(tol, _RTOL_FLOOR)

    def rhs(_t, y):
        return cr3bp_derivative(y, system)

    sol = solve_ivp(rhs, (0.0, period), np.asarray(state0, dtype=float),
                    method="DOP853", rtol=rtol, atol=rtol * 1e-3, dense_output=True)
    if not sol.success:
        raise IntegrationFailure(sol.message)
    return sol.sol


def find_libration_points(system: Cr3bpSystem = EARTH_MOON) -> tuple[float, float]:
    """x-coordinates of the collinear points L1 and L2 (LU).

    Solves the collinear force-balance equation by bracketed root-finding;
    the residual at the returned points is below 1e-12.
    """
    mu = system.mu

    def balance(x):
        return (x
                - (1.0 - mu) * (x + mu) / abs(x + mu) ** 3
                - mu * (x - 1.0 + mu) / abs(x - 1.0 + mu) ** 3)

    l1 = brentq(balance, -mu + 1e-9, 1.0 - mu - 1e-9, xtol=1e-15, rtol=8.9e-16)
    l2 = brentq(balance, 1.0 - mu + 1e-9, 2.0, xtol=1e-15, rtol=8.9e-16)
    return float(l1), float(l2)


def stability_index(monodromy: np.ndarray) -> float:
    """Linear stability index: half the magnitude of (lam_max + 1/lam_max).

    `lam_max` is the dominant monodromy eigenvalue, taken as the one with
    the largest real part.  For stable orbits (all eigenvalues on the unit
    circle) and for orbits whose hyperbolic pair is negative, the trivial
    unit eigenvalue wins that ordering and the index is exactly 1, which is
    the convention of the published catalog values.

    Raises:
        EigenFailure: eigenvalue iteration did not converge.
    """
    monodromy = np.asarray(monodromy, dtype=float)
    if monodromy.shape != (6, 6) or not np.all(np.isfinite(monodromy)):
        raise ValueError("monodromy must be a finite 6x6 matrix")
    try:
        eigs = np.linalg.eigvals(monodromy)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    lam = eigs[np.argmax(eigs.real)]
    return float(abs(lam + 1.0 / lam) / 2.0)


class LpoFamily(str, Enum):
    DRO = "DRO"
    DPO = "DPO"
    L1_LYAPUNOV = "L1Lyapunov"
    L2_LYAPUNOV = "L2Lyapunov"
    L2_HALO_S = "L2HaloS"
    L2_HALO_N = "L2HaloN"
    BUTTERFLY_S = "ButterflyS"
    BUTTERFLY_N = "ButterflyN"


@dataclass(frozen=True)
class LpoRecord:
    """One synodic-resonant periodic orbit of the candidate catalog.

    An M:N orbit completes M revolutions in N synodic months; its initial
    state is a perpendicular crossing of the x-z plane:
    ``[x0, 0, z0, 0, ydot0, 0]``.
    """

    family: LpoFamily
    resonance: tuple[int, int]
    x0: float
    z0: float
    ydot0: float
    period: float
    stability: float
    slots: int

    def __post_init__(self):
        m, n = self.resonance
        if m < 1 or n < 1:
            raise ConfigError("resonance integers must be positive")
        expected = (n / m) * EARTH_MOON.synodic_period_tu
        if abs(self.period - expected) > 1e-6 * self.period:
            raise ConfigError(
                f"{self.family.value} {m}:{n}: period {self.period} TU is not "
                f"(N/M) synodic months ({expected} TU)"
            )
        if self.stability < 1.0:
            raise ConfigError("stability index must be >= 1")
        if self.slots < 1:
            raise ConfigError("slot count must be >= 1")

    @property
    def label(self) -> str:
        m, n = self.resonance
        return f"{self.family.value} ({m}:{n})"

    def initial_state(self) -> np.ndarray:
        return np.array([self.x0, 0.0, self.z0, 0.0, self.ydot0, 0.0])


# Published initial conditions of the 30 planar/Southern catalog members:
# (family, M, N, x0, z0, ydot0, period TU, stability index).  Northern Halo
# and Butterfly members are generated by flipping the sign of z0.
_CATALOG_TABLE: tuple[tuple[LpoFamily, int, int, float, float, float, float, float], ...] = (
    (LpoFamily.BUTTERFLY_S, 1, 1, 0.99265217, -0.17814460, -0.26312433, 6.65515541, 1.00),
    (LpoFamily.BUTTERFLY_S, 3, 2, 0.91414032, -0.14492270, -0.11588220, 4.43677028, 1.00),
    (LpoFamily.BUTTERFLY_S, 2, 1, 0.91204757, -0.14952514, -0.02724245, 3.32757771, 12.45),
    (LpoFamily.BUTTERFLY_S, 9, 4, 0.94130132, -0.16165899, -0.03565177, 2.95784685, 5.79),
    (LpoFamily.L1_LYAPUNOV, 1, 1, 0.63394833, 0.0, 0.79045684, 6.65515541, 53.98),
    (LpoFamily.L1_LYAPUNOV, 3, 2, 0.76511295, 0.0, 0.49115556, 4.43677028, 133.00),
    (LpoFamily.L1_LYAPUNOV, 2, 1, 0.79987674, 0.0, 0.35828602, 3.32757771, 407.88),
    (LpoFamily.L1_LYAPUNOV, 9, 4, 0.81109465, 0.0, 0.26078428, 2.95784685, 746.89),
    (LpoFamily.L2_LYAPUNOV, 1, 1, 0.99695262, 0.0, 1.64068576, 6.65515541, 49.78),
    (LpoFamily.L2_LYAPUNOV, 3, 2, 1.02557297, 0.0, 0.77068285, 4.43677028, 115.15),
    (LpoFamily.DPO, 1, 1, 1.00515914, 0.0, 1.16888350, 6.65515541, 1399.19),
    (LpoFamily.DPO, 3, 2, 1.02851298, 0.0, 0.71048482, 4.43677028, 587.57),
    (LpoFamily.DPO, 2, 1, 1.04880058, 0.0, 0.51457559, 3.32757771, 159.21),
    (LpoFamily.DPO, 9, 4, 1.05547996, 0.0, 0.45941661, 2.95784685, 76.76),
    (LpoFamily.DPO, 5, 2, 1.05978399, 0.0, 0.42240630, 2.66206217, 37.71),
    (LpoFamily.DPO, 3, 1, 1.06335021, 0.0, 0.38222392, 2.21838514, 10.98),
    (LpoFamily.DPO, 4, 1, 1.06189575, 0.0, 0.35989734, 1.66378885, 2.26),
    (LpoFamily.DRO, 3, 2, 0.73370014, 0.0, 0.62889866, 4.43677028, 1.00),
    (LpoFamily.DRO, 2, 1, 0.79946085, 0.0, 0.52703349, 3.32757771, 1.00),
    (LpoFamily.DRO, 9, 4, 0.81807765, 0.0, 0.50559384, 2.95784685, 1.00),
    (LpoFamily.DRO, 5, 2, 0.83249233, 0.0, 0.49184571, 2.66206217, 1.00),
    (LpoFamily.DRO, 3, 1, 0.85378188, 0.0, 0.47696024, 2.21838514, 1.00),
    (LpoFamily.DRO, 4, 1, 0.88060589, 0.0, 0.47011146, 1.66378885, 1.00),
    (LpoFamily.DRO, 9, 2, 0.88976967, 0.0, 0.47183463, 1.47892343, 1.00),
    (LpoFamily.L2_HALO_S, 2, 1, 1.16846916, -0.09994291, -0.19568201, 3.32757771, 282.87),
    (LpoFamily.L2_HALO_S, 9, 4, 1.12518004, -0.18195085, -0.22544142, 2.95784685, 28.78),
    (LpoFamily.L2_HALO_S, 5, 2, 1.10193101, -0.19829817, -0.21702846, 2.66206217, 6.93),
    (LpoFamily.L2_HALO_S, 3, 1, 1.07203837, -0.20182525, -0.18853332, 2.21838514, 1.00),
    (LpoFamily.L2_HALO_S, 4, 1, 1.03352559, -0.18903385, -0.12699215, 1.66378885, 1.00),
    (LpoFamily.L2_HALO_S, 9, 2, 1.01958272, -0.18036049, -0.09788185, 1.47892343, 1.00),
)

_MIRROR = {LpoFamily.BUTTERFLY_S: LpoFamily.BUTTERFLY_N,
           LpoFamily.L2_HALO_S: LpoFamily.L2_HALO_N}


def slot_count(period_tu: float, dt_b_hours: float,
               system: Cr3bpSystem = EARTH_MOON) -> int:
    """Number of equally spaced slots: ceil(period / slot spacing)."""
    if dt_b_hours <= 0.0:
        raise ConfigError("slot spacing must be positive")
    return int(math.ceil(system.tu_to_hours(period_tu) / dt_b_hours))


def build_catalog(dt_b_hours: float = 12.0,
                  table_path: str | Path | None = None,
                  system: Cr3bpSystem = EARTH_MOON) -> list[LpoRecord]:
    """Assemble the candidate orbit catalog with per-orbit slot counts.

    The embedded table holds the 30 published planar/Southern members;
    Northern Halo and Butterfly members are appended as z0 mirrors.  An
    override file (see `load_catalog_table`) replaces the embedded rows.
    """
    rows = load_catalog_table(table_path) if table_path is not None else _CATALOG_TABLE
    records = [
        LpoRecord(family=fam, resonance=(m, n), x0=x0, z0=z0, ydot0=yd,
                  period=per, stability=nu,
                  slots=slot_count(per, dt_b_hours, system))
        for fam, m, n, x0, z0, yd, per, nu in rows
    ]
    for rec in list(records):
        mirror = _MIRROR.get(rec.family)
        if mirror is not None:
            records.append(replace(rec, family=mirror, z0=-rec.z0))
    return records


def load_catalog_table(path: str | Path):
    """Read catalog rows from a plain-text table.

    Columns (whitespace-separated): family M:N x0 z0 ydot0 period stability.
    Family tokens match `LpoFamily` values; lines starting with '#' are
    skipped.  Mirror members are still generated, so the file should list
    only planar/Southern rows.
    """
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ParseError(f"expected 7 columns, got {len(parts)}", line=lineno)
        try:
            family = LpoFamily(parts[0])
        except ValueError:
            raise ParseError(f"unknown family {parts[0]!r}", line=lineno) from None
        if ":" not in parts[1]:
            raise ParseError(f"resonance must be M:N, got {parts[1]!r}", line=lineno)
        try:
            m, n = (int(tok) for tok in parts[1].split(":"))
            x0, z0, yd, per, nu = (float(tok) for tok in parts[2:])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        rows.append((family, m, n, x0, z0, yd, per, nu))
    if not rows:
        raise ParseError("catalog table is empty")
    return tuple(rows)


def correct_initial_state(record: LpoRecord,
                          system: Cr3bpSystem = EARTH_MOON,
                          tol: float = 1e-12,
                          max_iter: int = 12) -> np.ndarray:
    """Refine a published initial state by single-shooting on symmetry.

    The orbits are symmetric about the x-z plane, so the state at half the
    (fixed, resonant) period must be another perpendicular crossing:
    y = vx = vz = 0.  Newton's method adjusts (x0, z0, vy0) -- or (x0, vy0)
    for planar members -- using STM columns, keeping the period untouched.
    """
    state = record.initial_state()
    planar = record.z0 == 0.0
    half = record.period / 2.0
    var_cols = [0, 4] if planar else [0, 2, 4]
    res_rows = [1, 3] if planar else [1, 3, 5]
    for _ in range(max_iter):
        final, stm = propagate(state, half, system, with_stm=True, tol=tol)
        residual = final[res_rows]
        if float(np.max(np.abs(residual))) < tol:
            break
        jac = stm[np.ix_(res_rows, var_cols)]
        delta = np.linalg.solve(jac, -residual)
        state[var_cols] += delta
    return state


@dataclass(frozen=True)
class SlotEphemeris:
    """Rotating-frame positions of one candidate observer slot.

    positions[t-1] is the slot position at time step t (t = 1..horizon); a
    slot with phase offset s/b leads the orbit's initial state by that
    fraction of the period.
    """

    slot_orbit: int
    phase_offset: float
    positions: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.phase_offset < 1.0:
            raise ConfigError("phase offset must be in [0, 1)")
        if not np.all(np.isfinite(self.positions)):
            raise ConfigError("slot positions must be finite")


def slot_ephemeris(catalog: list[LpoRecord],
                   horizon: int,
                   dt: float,
                   system: Cr3bpSystem = EARTH_MOON,
                   correct: bool = True,
                   tol: float = 1e-12) -> list[SlotEphemeris]:
    """Positions of every catalog slot at each of `horizon` time steps.

    One reference revolution per orbit is integrated with a dense high-order
    interpolant and evaluated at the wrapped phases
    ((t-1) dt + (s/b) P) mod P; this avoids per-slot long propagations.

    Args:
        catalog: orbit records (ordering defines global slot indexing).
        horizon: number of time steps (>= 1).
        dt: step length in TU.
        correct: refine initial states by differential correction first.
    """
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    out: list[SlotEphemeris] = []
    corrected: dict[tuple, np.ndarray] = {}
    for orbit_idx, rec in enumerate(catalog):
        if correct:
            key = (rec.x0, rec.z0, rec.ydot0, rec.period)
            mirror_key = (rec.x0, -rec.z0, rec.ydot0, rec.period)
            state0 = corrected.get(key)
            if state0 is None:
                if rec.z0 != 0.0 and mirror_key in corrected:
                    # dynamics are z-symmetric: mirror the sibling correction
                    state0 = corrected[mirror_key].copy()
                    state0[2] = -state0[2]
                    state0[5] = -state0[5]
                else:
                    state0 = correct_initial_state(rec, system, tol=tol)
                corrected[key] = state0
        else:
            state0 = rec.initial_state()
        interp = _dense_revolution(state0, rec.period, system, tol=tol)
        steps = np.arange(horizon, dtype=float) * dt
        for s in range(rec.slots):
            offset = s / rec.slots
            phases = np.mod(steps + offset * rec.period, rec.period)
            positions = interp(phases)[:3].T.copy()
            out.append(SlotEphemeris(slot_orbit=orbit_idx, phase_offset=offset,
                                     positions=positions))
    return out
