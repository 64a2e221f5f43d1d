"""Sun geometry, apparent-magnitude model, pointing set, and the visibility flag.

All functions broadcast over leading axes: positions are arrays of shape
(..., 3) in rotating-frame LU, angles are radians.  A target is considered
visible when it is not occulted by the Moon, lies inside the sensor's FOV
cone, and its apparent magnitude does not exceed the sensor cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import EARTH_MOON, Cr3bpSystem
from .errors import ConfigError, DegenerateGeometry, DomainError, ObserverInsideBody

_TINY = 1e-12

SUN_DISTANCE_KM = 1.496e8
MOON_RADIUS_KM = 1737.4
SUN_APPARENT_MAGNITUDE = -26.74


@dataclass(frozen=True)
class SunModel:
    """Coplanar Sun moving clockwise in the rotating frame.

    theta(t) = theta0 - rate * t; theta0 = 0 puts the Sun on the +x axis
    (Sun-Earth-Moon syzygy on the Moon side) at t = 0.
    """

    theta0: float = 0.0
    rate: float = 2.0 * math.pi / EARTH_MOON.synodic_period_tu
    distance: float = SUN_DISTANCE_KM / EARTH_MOON.length_unit_km

    def __post_init__(self):
        if self.distance <= 100.0:
            raise ConfigError("Sun distance must exceed 100 LU")
        if self.rate <= 0.0:
            raise ConfigError("Sun angular rate must be positive")

    @classmethod
    def for_system(cls, system: Cr3bpSystem, theta0: float = 0.0) -> "SunModel":
        return cls(theta0=theta0,
                   rate=2.0 * math.pi / system.synodic_period_tu,
                   distance=SUN_DISTANCE_KM / system.length_unit_km)


@dataclass(frozen=True)
class TargetOptics:
    """Reflective properties of the (common) observation target."""

    diameter_km: float = 0.001
    spec_reflectance: float = 0.0
    diff_reflectance: float = 0.2
    m_sun: float = SUN_APPARENT_MAGNITUDE

    def __post_init__(self):
        if self.diameter_km <= 0.0:
            raise ConfigError("target diameter must be positive")
        for name in ("spec_reflectance", "diff_reflectance"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if not math.isfinite(self.m_sun):
            raise ConfigError("m_sun must be finite")


@dataclass(frozen=True)
class SensorParams:
    """Optical sensor model: full FOV cone angle (deg), magnitude cutoff,
    and the hard-sphere occultation radius of the Moon."""

    fov_deg: float = 60.0
    m_crit: float = 18.0
    moon_radius_km: float = MOON_RADIUS_KM

    def __post_init__(self):
        # 360 deg is allowed as an explicit "FOV check disabled" setting
        if not 0.0 < self.fov_deg <= 360.0:
            raise ConfigError("FOV must be in (0, 360] degrees")
        if math.isnan(self.m_crit):
            raise ConfigError("m_crit must not be NaN")
        if self.moon_radius_km <= 0.0:
            raise ConfigError("Moon radius must be positive")


@dataclass(frozen=True)
class PointingSet:
    """Fixed rotating-frame pointing directions with azimuth/elevation labels."""

    directions: np.ndarray
    azimuth: np.ndarray = field(repr=False, default=None)
    elevation: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        dirs = np.atleast_2d(np.asarray(self.directions, dtype=float))
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > _TINY):
            raise ConfigError("pointing directions must be unit vectors")
        object.__setattr__(self, "directions", dirs)
        if self.azimuth is None:
            object.__setattr__(self, "azimuth", np.arctan2(dirs[:, 1], dirs[:, 0]))
        if self.elevation is None:
            object.__setattr__(self, "elevation", np.arcsin(np.clip(dirs[:, 2], -1, 1)))

    def __len__(self) -> int:
        return self.directions.shape[0]


def pointing_directions() -> PointingSet:
    """The 14-direction set: 6 axis-aligned and 8 diagonal unit vectors.

    Order: +x, -x, +y, -y, +z, -z, then the diagonals (sx, sy, sz)/sqrt(3)
    with signs in lexicographic order (+++, ++-, +-+, +--, -++, -+-, --+,
    ---).  The set is closed under negation.
    """
    axes = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    diag = [(sx, sy, sz) for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)]
    dirs = np.array(axes + diag, dtype=float)
    dirs[6:] /= math.sqrt(3.0)
    return PointingSet(directions=dirs)


def sun_position(t, model: SunModel):
    """Sun position at time t (TU); clockwise motion in the rotating frame."""
    theta = model.theta0 - model.rate * np.asarray(t, dtype=float)
    return model.distance * np.stack(
        [np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)


def diffuse_phase_function(phi):
    """Lambertian-sphere diffuse phase function, (2/3pi)[sin p + (pi-p) cos p].

    Defined for phase angles in [0, pi]; ranges from 2/3 (fully lit) to 0.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0.0) or np.any(phi > math.pi):
        raise DomainError("phase angle must be in [0, pi]")
    val = (2.0 / (3.0 * math.pi)) * (np.sin(phi) + (math.pi - phi) * np.cos(phi))
    # float sin(pi) leaves ~1e-16; the endpoint is exactly dark
    val = np.where(phi == math.pi, 0.0, val)
    return val if val.ndim else float(val)


def _unit(vec, what: str):
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    if np.any(norm < _TINY):
        raise DegenerateGeometry(f"{what} separation below {_TINY} LU")
    return vec / norm


def solar_phase_angle(r_obs, r_tgt, r_sun):
    """Angle at the target between the observer and Sun lines of sight.

    Uses unit vectors observer->target and Sun->target, so 0 means the
    observer sees the fully lit face and pi means it looks down-Sun at the
    dark face.  Clamped to [0, pi].
    """
    l_ok = _unit(np.asarray(r_tgt, float) - np.asarray(r_obs, float), "observer-target")
    l_sk = _unit(np.asarray(r_tgt, float) - np.asarray(r_sun, float), "Sun-target")
    cosphi = np.clip(np.sum(l_ok * l_sk, axis=-1), -1.0, 1.0)
    out = np.arccos(cosphi)
    return out if out.ndim else float(out)


def apparent_magnitude(r_obs, r_tgt, r_sun, optics: TargetOptics,
                       length_unit_km: float = EARTH_MOON.length_unit_km):
    """Apparent magnitude of the target seen from the observer.

    m = m_sun - 2.5 log10((d/range)^2 [a_spec/4 + a_diff p_diff(phi)]), with
    the target diameter and range both expressed in km.  Returns +inf where
    the reflectance bracket vanishes (target invisible at any range).
    """
    phi = solar_phase_angle(r_obs, r_tgt, r_sun)
    range_km = np.linalg.norm(np.asarray(r_tgt, float) - np.asarray(r_obs, float),
                              axis=-1) * length_unit_km
    bracket = (optics.spec_reflectance / 4.0
               + optics.diff_reflectance * diffuse_phase_function(phi))
    flux = (optics.diameter_km / range_km) ** 2 * bracket
    with np.errstate(divide="ignore"):
        out = optics.m_sun - 2.5 * np.log10(flux)
    return out if np.ndim(out) else float(out)


def in_fov(r_obs, direction, r_tgt, fov_deg):
    """True when the target lies inside the sensor cone of full angle fov_deg."""
    los = _unit(np.asarray(r_tgt, float) - np.asarray(r_obs, float), "observer-target")
    cos_half = math.cos(math.radians(fov_deg) / 2.0)
    along = np.sum(np.asarray(direction, float) * los, axis=-1)
    out = along >= cos_half
    return out if np.ndim(out) else bool(out)


def moon_occults(r_obs, r_tgt, moon_center, moon_radius_lu):
    """True when the Moon's hard sphere blocks the observer-target line.

    The target is occulted when the line of sight passes within the Moon's
    angular radius and the target lies farther than the Moon.
    """
    r_obs = np.asarray(r_obs, float)
    to_moon = np.asarray(moon_center, float) - r_obs
    d_moon = np.linalg.norm(to_moon, axis=-1)
    if np.any(d_moon <= moon_radius_lu):
        raise ObserverInsideBody("observer inside the Moon sphere")
    to_tgt = np.asarray(r_tgt, float) - r_obs
    d_tgt = np.linalg.norm(to_tgt, axis=-1)
    if np.any(d_tgt < _TINY):
        raise DegenerateGeometry("observer-target separation below 1e-12 LU")
    cos_sep = np.clip(np.sum(to_moon * to_tgt, axis=-1) / (d_moon * d_tgt), -1.0, 1.0)
    phi_crit = np.arcsin(moon_radius_lu / d_moon)
    out = (np.arccos(cos_sep) < phi_crit) & (d_tgt > d_moon)
    return out if np.ndim(out) else bool(out)


def visibility(r_obs, r_tgt, direction, r_sun, sensor: SensorParams,
               optics: TargetOptics,
               moon_center=None,
               length_unit_km: float = EARTH_MOON.length_unit_km,
               moon_radius_lu: float | None = None):
    """Boolean visibility flag combining occultation, FOV, and magnitude.

    The magnitude comparison is inclusive: a target exactly at the cutoff
    counts as visible.
    """
    if moon_center is None:
        moon_center = EARTH_MOON.primary_positions[1]
    if moon_radius_lu is None:
        moon_radius_lu = sensor.moon_radius_km / length_unit_km
    occ = moon_occults(r_obs, r_tgt, moon_center, moon_radius_lu)
    fov_ok = in_fov(r_obs, direction, r_tgt, sensor.fov_deg)
    mag = apparent_magnitude(r_obs, r_tgt, r_sun, optics, length_unit_km)
    out = ~np.asarray(occ) & np.asarray(fov_ok) & (np.asarray(mag) <= sensor.m_crit)
    return out if np.ndim(out) else bool(out)
