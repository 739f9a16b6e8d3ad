"""Analytic two-body propagation with optional secular J2 drift.

Produces Earth-centered inertial state vectors at arbitrary offsets from
an element set's epoch. Only secular J2 rates are modelled (RAAN,
argument-of-perigee, and mean-anomaly drift); there are no periodic
terms and no drag, so semi-major axis and eccentricity are constant.

The module is built around array kernels (used by the flux engine on
whole catalogues at once); the scalar API wraps them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .catalogue import KeplerianElements
from .constants import J2_EARTH, MU_EARTH_KM3_S2, R_EARTH_KM, TWO_PI


class NonConvergence(Exception):
    """Kepler-equation iteration failed to reach the residual bound."""

    def __init__(self, mean_anomaly: float, eccentricity: float):
        self.mean_anomaly = mean_anomaly
        self.eccentricity = eccentricity
        super().__init__(
            f"Kepler solve did not converge for M={mean_anomaly}, e={eccentricity}"
        )


class PerturbationMode(Enum):
    TWO_BODY = "twobody"
    J2_SECULAR = "j2"


@dataclass(frozen=True, eq=False)
class StateVector:
    """Cartesian ECI state: position in km, velocity in km/s."""

    position_km: np.ndarray
    velocity_km_s: np.ndarray


_RESIDUAL_TOL = 1e-12
_MAX_NEWTON = 50


def _kepler_bisect(mr: float, e: float) -> float:
    # f(E) = E - e sin E - mr is strictly increasing for e < 1 and
    # bracketed by [mr - e, mr + e].
    lo, hi = mr - e, mr + e
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - e * math.sin(mid) - mr < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_kepler(mean_anomaly: float, eccentricity: float) -> float:
    """Solve E - e*sin(E) = M for the eccentric anomaly.

    Newton iteration with a bisection fallback; the result satisfies
    |E - e*sin(E) - M| < 1e-12 and lies in the same 2*pi branch as M.
    """
    if not (0.0 <= eccentricity < 1.0):
        raise ValueError(f"eccentricity {eccentricity} outside [0, 1)")
    if not math.isfinite(mean_anomaly):
        raise ValueError("mean anomaly must be finite")
    e = eccentricity
    mr = math.fmod(mean_anomaly, TWO_PI)
    if mr < 0.0:
        mr += TWO_PI
    branch = mean_anomaly - mr

    ecc_anom = math.pi if e > 0.8 else mr + e * math.sin(mr)
    for _ in range(_MAX_NEWTON):
        f = ecc_anom - e * math.sin(ecc_anom) - mr
        if abs(f) < _RESIDUAL_TOL:
            return ecc_anom + branch
        ecc_anom -= f / (1.0 - e * math.cos(ecc_anom))
    ecc_anom = _kepler_bisect(mr, e)
    if abs(ecc_anom - e * math.sin(ecc_anom) - mr) >= _RESIDUAL_TOL:
        raise NonConvergence(mean_anomaly, eccentricity)
    return ecc_anom + branch


def eccentric_anomaly_array(mean_anomaly: np.ndarray, eccentricity: np.ndarray) -> np.ndarray:
    """Vectorized Kepler solve on mean anomalies reduced to [0, 2*pi)."""
    mr = np.mod(mean_anomaly, TWO_PI)
    ecc_anom = np.where(eccentricity > 0.8, np.pi, mr + eccentricity * np.sin(mr))
    for _ in range(_MAX_NEWTON):
        f = ecc_anom - eccentricity * np.sin(ecc_anom) - mr
        bad = np.abs(f) >= _RESIDUAL_TOL
        if not bad.any():
            return ecc_anom
        ecc_anom = np.where(
            bad, ecc_anom - f / (1.0 - eccentricity * np.cos(ecc_anom)), ecc_anom
        )
    # Stragglers (high eccentricity near the singular corner): bisection.
    for idx in np.flatnonzero(np.abs(ecc_anom - eccentricity * np.sin(ecc_anom) - mr) >= _RESIDUAL_TOL):
        root = _kepler_bisect(float(mr[idx]), float(eccentricity[idx]))
        if abs(root - eccentricity[idx] * math.sin(root) - mr[idx]) >= _RESIDUAL_TOL:
            raise NonConvergence(float(mean_anomaly[idx]), float(eccentricity[idx]))
        ecc_anom[idx] = root
    return ecc_anom


@dataclass(frozen=True, eq=False)
class ElementArrays:
    """Per-object element columns plus precomputed secular rates.

    The flux engine propagates thousands of objects per step; holding
    the columns once avoids rebuilding them every call.
    """

    epoch: np.ndarray
    sma: np.ndarray
    ecc: np.ndarray
    inc: np.ndarray
    raan: np.ndarray
    argp: np.ndarray
    manom: np.ndarray
    mean_motion: np.ndarray
    raan_rate: np.ndarray
    argp_rate: np.ndarray
    manom_rate: np.ndarray

    @classmethod
    def build(cls, elements: list[KeplerianElements], mode: PerturbationMode) -> "ElementArrays":
        epoch = np.array([el.epoch for el in elements])
        sma = np.array([el.semi_major_axis_km for el in elements])
        ecc = np.array([el.eccentricity for el in elements])
        inc = np.array([el.inclination_rad for el in elements])
        raan = np.array([el.raan_rad for el in elements])
        argp = np.array([el.arg_perigee_rad for el in elements])
        manom = np.array([el.mean_anomaly_rad for el in elements])
        mean_motion = np.sqrt(MU_EARTH_KM3_S2 / sma**3)
        if mode is PerturbationMode.J2_SECULAR:
            p = sma * (1.0 - ecc**2)
            k = mean_motion * J2_EARTH * (R_EARTH_KM / p) ** 2
            cos_i = np.cos(inc)
            raan_rate = -1.5 * k * cos_i
            argp_rate = 0.75 * k * (5.0 * cos_i**2 - 1.0)
            manom_rate = 0.75 * k * np.sqrt(1.0 - ecc**2) * (3.0 * cos_i**2 - 1.0)
        else:
            raan_rate = np.zeros_like(sma)
            argp_rate = np.zeros_like(sma)
            manom_rate = np.zeros_like(sma)
        return cls(
            epoch=epoch,
            sma=sma,
            ecc=ecc,
            inc=inc,
            raan=raan,
            argp=argp,
            manom=manom,
            mean_motion=mean_motion,
            raan_rate=raan_rate,
            argp_rate=argp_rate,
            manom_rate=manom_rate,
        )

    def __len__(self) -> int:
        return len(self.sma)


def states_at(arrays: ElementArrays, dt: np.ndarray, with_velocity: bool = True):
    """Positions (and optionally velocities) after per-object offsets dt.

    Returns (pos, vel) as (n, 3) arrays in km and km/s; vel is None when
    with_velocity is False.
    """
    ecc = arrays.ecc
    manom = arrays.manom + (arrays.mean_motion + arrays.manom_rate) * dt
    ecc_anom = eccentric_anomaly_array(manom, ecc)
    cos_e = np.cos(ecc_anom)
    sin_e = np.sin(ecc_anom)
    one_m_e2 = np.sqrt(1.0 - ecc**2)

    # Perifocal coordinates and the 3-1-3 rotation into ECI.
    x_pf = arrays.sma * (cos_e - ecc)
    y_pf = arrays.sma * one_m_e2 * sin_e
    raan = arrays.raan + arrays.raan_rate * dt
    argp = arrays.argp + arrays.argp_rate * dt
    cos_o, sin_o = np.cos(raan), np.sin(raan)
    cos_w, sin_w = np.cos(argp), np.sin(argp)
    cos_i, sin_i = np.cos(arrays.inc), np.sin(arrays.inc)
    px = cos_o * cos_w - sin_o * sin_w * cos_i
    py = sin_o * cos_w + cos_o * sin_w * cos_i
    pz = sin_w * sin_i
    qx = -cos_o * sin_w - sin_o * cos_w * cos_i
    qy = -sin_o * sin_w + cos_o * cos_w * cos_i
    qz = cos_w * sin_i

    pos = np.empty((len(arrays), 3))
    pos[:, 0] = x_pf * px + y_pf * qx
    pos[:, 1] = x_pf * py + y_pf * qy
    pos[:, 2] = x_pf * pz + y_pf * qz
    if not with_velocity:
        return pos, None

    radius = arrays.sma * (1.0 - ecc * cos_e)
    v_scale = np.sqrt(MU_EARTH_KM3_S2 * arrays.sma) / radius
    vx_pf = -v_scale * sin_e
    vy_pf = v_scale * one_m_e2 * cos_e
    vel = np.empty((len(arrays), 3))
    vel[:, 0] = vx_pf * px + vy_pf * qx
    vel[:, 1] = vx_pf * py + vy_pf * qy
    vel[:, 2] = vx_pf * pz + vy_pf * qz
    return pos, vel


def propagate(
    elements: KeplerianElements,
    dt_s: float,
    mode: PerturbationMode = PerturbationMode.TWO_BODY,
) -> StateVector:
    """State vector dt_s seconds after the element epoch (negative ok)."""
    arrays = ElementArrays.build([elements], mode)
    pos, vel = states_at(arrays, np.array([dt_s]))
    return StateVector(position_km=pos[0], velocity_km_s=vel[0])


def orbital_period(elements: KeplerianElements) -> float:
    """Keplerian period 2*pi*sqrt(a^3/mu), in seconds."""
    a = elements.semi_major_axis_km
    return TWO_PI * math.sqrt(a**3 / MU_EARTH_KM3_S2)
