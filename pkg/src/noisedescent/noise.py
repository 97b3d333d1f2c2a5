"""Jet mixing noise at a ground observer and trajectory-level noise/fuel metrics.

The instantaneous overall level combines a semi-empirical coaxial-jet
source level with spherical spreading, an altitude correction and the
kinematic (convection + relative motion) corrections.  The equivalent
continuous level over the descent is the log of the time-averaged
acoustic energy.  Atmospheric absorption, ground effect and frequency
corrections are zero-valued plug-in hooks.

Functions are complex-step safe for derivative propagation, like the
flight dynamics module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, NoiseTermError
from .flight_dynamics import (
    ISA,
    AircraftModel,
    Atmosphere,
    Control,
    State,
    air_density,
    fuel_flow_arrays,
    speed_of_sound,
)

# Correction hooks take (R, h) arrays and return a dB contribution.
CorrectionHook = Callable[[np.ndarray, np.ndarray], np.ndarray]

_NEAR_FIELD_R = 1.0  # m; slant range is clamped here to keep logs finite

TERM_NAMES = (
    "baseline",
    "density_ratio",
    "jet_velocity",
    "nozzle_geometry",
    "coaxial_mixing",
    "nozzle_area",
    "temperature_ratio",
    "altitude",
    "spreading",
    "convection",
    "motion",
    "absorption_hook",
    "ground_hook",
    "frequency_hook",
)


@dataclass(frozen=True)
class EngineNoiseParams:
    """Coaxial-nozzle jet parameters plus level-model switches.

    Defaults describe a representative two-engine narrow-body turbofan;
    they are not measured data and are meant to be overridden from the
    config file.  ``me`` controls how strongly the outer stream masks
    inner-stream mixing noise; when left unset it defaults to
    1.1*sqrt(s2/s1).
    """

    v1: float = 400.0    # jet gas speed, inner contour, m/s
    v2: float = 250.0    # jet gas speed, outer contour, m/s
    s1: float = 0.35     # nozzle area, inner contour, m^2
    s2: float = 1.10     # nozzle area, outer contour, m^2
    tau1: float = 700.0  # temperature, inner contour, K
    tau2: float = 330.0  # temperature, outer contour, K
    rho1: float = 0.60   # gas density, inner contour, kg/m^3
    d: float = 1.20      # nozzle diameter, m
    me: Optional[float] = None  # interaction exponent; None -> 1.1*sqrt(s2/s1)
    temp_term_coeff: float = 1.0  # coefficient of the log10(tau1/tau2) term
    directivity_mode: str = "velocity_vector"  # or "track_axis"
    track_axis: tuple[float, float] = (1.0, 0.0)  # horizontal axis for track_axis mode
    absorption_hook: Optional[CorrectionHook] = field(default=None, compare=False)
    ground_hook: Optional[CorrectionHook] = field(default=None, compare=False)
    frequency_hook: Optional[CorrectionHook] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.v1 > self.v2 >= 0.0):
            raise ValueError("jet speeds must satisfy v1 > v2 >= 0")
        for name in ("s1", "s2", "tau1", "tau2", "rho1", "d"):
            if getattr(self, name) <= 0:
                raise ValueError(f"engine noise parameter {name} must be strictly positive")
        if self.me is None:
            object.__setattr__(self, "me", 1.1 * math.sqrt(self.s2 / self.s1))
        if self.directivity_mode not in ("velocity_vector", "track_axis"):
            raise ValueError(f"unknown directivity mode {self.directivity_mode!r}")
        ax, ay = self.track_axis
        if math.hypot(ax, ay) <= 0:
            raise ValueError("track_axis must be a nonzero horizontal vector")


@dataclass(frozen=True)
class Observer:
    """Ground receiver position (height 0)."""

    x: float  # m
    y: float  # m

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("observer coordinates must be finite")


@dataclass(frozen=True)
class Trajectory:
    """Sampled flight path: equidistant times, node states, interval controls."""

    times: np.ndarray     # (N+1,)
    states: np.ndarray    # (N+1, 6), columns per flight_dynamics order
    controls: np.ndarray  # (N, 3)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        n = times.shape[0] - 1
        if n < 1:
            raise ValueError("trajectory needs at least two grid times")
        if states.shape != (n + 1, 6):
            raise ValueError(f"states must have shape ({n + 1}, 6), got {states.shape}")
        if controls.shape != (n, 3):
            raise ValueError(f"controls must have shape ({n}, 3), got {controls.shape}")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValueError("grid times must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("grid times must be equidistant")

    @property
    def n_intervals(self) -> int:
        return self.times.shape[0] - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def state(self, k: int) -> State:
        return State.from_array(self.states[k])

    def control(self, k: int) -> Control:
        # the last node reuses the final interval's control
        return Control.from_array(self.controls[min(k, self.n_intervals - 1)])

    def node_controls(self) -> np.ndarray:
        """Controls sampled at every node, the last interval's repeated at t_N."""
        return np.vstack([self.controls, self.controls[-1]])


def _check_log_arg(term: str, value) -> None:
    arr = np.atleast_1d(np.asarray(value))
    bad = np.real(arr) <= 0.0
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise NoiseTermError(term, f"nonpositive log argument at node {idx}")


def slant_range_arrays(x, y, h, obs: Observer):
    """Source-to-observer distance, clamped to the near-field floor of 1 m."""
    dx = np.asarray(x) - obs.x
    dy = np.asarray(y) - obs.y
    r = np.sqrt(dx * dx + dy * dy + np.asarray(h) ** 2)
    return np.where(np.real(r) < _NEAR_FIELD_R, _NEAR_FIELD_R, r)


def source_observer_distance(state: State, obs: Observer) -> float:
    """Euclidean distance from the aircraft to the ground observer, m (>= 1)."""
    return float(np.real(slant_range_arrays(state.x, state.y, state.h, obs)))


def directivity_cos_arrays(V, gamma, chi, x, y, h, obs: Observer,
                           params: EngineNoiseParams):
    """cos(theta) between the emission axis and the line to the observer.

    velocity_vector mode uses the instantaneous velocity direction;
    track_axis mode uses a fixed horizontal axis, which removes the
    gamma/chi dependence of the level.
    """
    dx = obs.x - np.asarray(x)
    dy = obs.y - np.asarray(y)
    dz = -np.asarray(h)
    r = slant_range_arrays(x, y, h, obs)
    if params.directivity_mode == "velocity_vector":
        cg = np.cos(np.asarray(gamma))
        ex = cg * np.cos(np.asarray(chi))
        ey = cg * np.sin(np.asarray(chi))
        ez = np.sin(np.asarray(gamma))
    else:
        ax, ay = params.track_axis
        norm = math.hypot(ax, ay)
        ex, ey, ez = ax / norm, ay / norm, 0.0
    return (ex * dx + ey * dy + ez * dz) / r


def directivity_angle(state: State, obs: Observer,
                      params: EngineNoiseParams) -> float:
    """Directivity angle in [0, pi] at one state."""
    raw = math.hypot(state.x - obs.x, state.y - obs.y, state.h)
    if raw < 1e-12:
        raise DomainError("observer coincides with the source; directivity undefined")
    c = directivity_cos_arrays(state.V, state.gamma, state.chi,
                               state.x, state.y, state.h, obs, params)
    return float(np.arccos(np.clip(np.real(c), -1.0, 1.0)))


def effective_jet_speed(V, params: EngineNoiseParams):
    """Effective jet speed v1*(1 - V/v1)**(2/3); jet axis alignment neglected."""
    V = np.asarray(V)
    if np.any(np.real(V) >= params.v1):
        raise DomainError(f"airspeed must stay below the inner jet speed {params.v1} m/s")
    return params.v1 * (1.0 - V / params.v1) ** (2.0 / 3.0)


def density_exponent_w(Ve, c):
    """Exponent of the density ratio: 3*(Ve/c)**3.5/(0.6+(Ve/c)**3.5) - 1."""
    q = (np.asarray(Ve) / np.asarray(c)) ** 3.5
    return 3.0 * q / (0.6 + q) - 1.0


def convection_mach(v1, V, c):
    """Eddy convection Mach number 0.62*(v1 - V)/c."""
    return 0.62 * (np.asarray(v1) - np.asarray(V)) / np.asarray(c)


def doppler_factor(Mc, theta):
    """Doppler convection factor (1 + Mc*cos(theta))**2 + 0.04*Mc**2."""
    return _doppler_factor_cos(np.asarray(Mc), np.cos(np.asarray(theta)))


def _doppler_factor_cos(Mc, cos_theta):
    return (1.0 + Mc * cos_theta) ** 2 + 0.04 * Mc * Mc


def _primitive_terms(V, rho, c, R, cos_theta, h,
                     params: EngineNoiseParams, atm: Atmosphere) -> dict:
    """All level terms from primitive quantities. Returns a dict of arrays."""
    p = params
    ve = effective_jet_speed(V, p)
    w = density_exponent_w(ve, c)
    mc = convection_mach(p.v1, V, c)
    cd = _doppler_factor_cos(mc, cos_theta)
    m_flight = np.asarray(V) / np.asarray(c)

    density_ratio = p.rho1 / rho
    _check_log_arg("density_ratio", density_ratio)
    velocity_ratio = ve / c
    _check_log_arg("jet_velocity", velocity_ratio)
    geom = 2.0 * p.s1 / (math.pi * p.d ** 2) + 0.5
    mixing = (1.0 - p.v2 / p.v1) ** p.me \
        + 1.2 * (1.0 + p.s2 * p.v2 ** 2 / (p.s1 * p.v1 ** 2)) ** 4 \
        / (1.0 + p.s2 / p.s1) ** 3
    _check_log_arg("coaxial_mixing", mixing)
    _check_log_arg("spreading", R)
    _check_log_arg("convection", cd)
    motion_arg = 1.0 - m_flight * cos_theta
    _check_log_arg("motion", motion_arg)

    zeros = np.zeros_like(np.asarray(V, dtype=np.result_type(V, float)))
    terms = {
        "baseline": zeros + 141.0,
        "density_ratio": 10.0 * w * np.log10(density_ratio),
        "jet_velocity": 75.0 * np.log10(velocity_ratio),
        "nozzle_geometry": zeros + 3.0 * math.log10(geom),
        "coaxial_mixing": zeros + 10.0 * math.log10(mixing),
        "nozzle_area": zeros + 10.0 * math.log10(p.s1),
        "temperature_ratio": zeros + p.temp_term_coeff * math.log10(p.tau1 / p.tau2),
        "altitude": 10.0 * np.log10((rho / atm.rho_isa) ** 2 * (c / atm.c_isa) ** 4),
        "spreading": -20.0 * np.log10(R),
        "convection": -15.0 * np.log10(cd),
        "motion": -10.0 * np.log10(motion_arg),
    }
    R_arr, h_arr = np.asarray(R), np.asarray(h)
    terms["absorption_hook"] = p.absorption_hook(R_arr, h_arr) if p.absorption_hook else zeros
    terms["ground_hook"] = p.ground_hook(R_arr, h_arr) if p.ground_hook else zeros
    terms["frequency_hook"] = p.frequency_hook(R_arr, h_arr) if p.frequency_hook else zeros
    return terms


def levels_arrays(V, gamma, chi, x, y, h, obs: Observer,
                  params: EngineNoiseParams, atm: Atmosphere = ISA):
    """Overall sound pressure level at the observer, dB, vectorized over nodes."""
    rho = air_density(h, atm)
    c = atm.c_isa * (rho / atm.rho_isa) ** (1.0 / (2.0 * atm.exponent))
    R = slant_range_arrays(x, y, h, obs)
    cos_theta = directivity_cos_arrays(V, gamma, chi, x, y, h, obs, params)
    terms = _primitive_terms(V, rho, c, R, cos_theta, h, params, atm)
    total = terms["baseline"]
    for name in TERM_NAMES[1:]:
        total = total + terms[name]
    return total


@dataclass(frozen=True)
class LevelTerms:
    """Per-term breakdown of one level evaluation, all in dB."""

    baseline: float
    density_ratio: float
    jet_velocity: float
    nozzle_geometry: float
    coaxial_mixing: float
    nozzle_area: float
    temperature_ratio: float
    altitude: float
    spreading: float
    convection: float
    motion: float
    absorption_hook: float
    ground_hook: float
    frequency_hook: float

    @property
    def total(self) -> float:
        return float(sum(getattr(self, name) for name in TERM_NAMES))


def level_breakdown(state: State, obs: Observer, params: EngineNoiseParams,
                    atm: Atmosphere = ISA, control: Control | None = None) -> LevelTerms:
    """Term-by-term level at one state (control reserved for jet-axis effects)."""
    rho = air_density(state.h, atm)
    c = speed_of_sound(state.h, atm)
    R = slant_range_arrays(state.x, state.y, state.h, obs)
    cos_theta = directivity_cos_arrays(state.V, state.gamma, state.chi,
                                       state.x, state.y, state.h, obs, params)
    terms = _primitive_terms(state.V, rho, c, R, cos_theta, state.h, params, atm)
    return LevelTerms(**{name: float(np.real(terms[name])) for name in TERM_NAMES})


def sound_pressure_level(state: State, obs: Observer, params: EngineNoiseParams,
                         atm: Atmosphere = ISA, control: Control | None = None) -> float:
    """Overall instantaneous level L_P at one state, dB."""
    return float(np.real(levels_arrays(state.V, state.gamma, state.chi,
                                       state.x, state.y, state.h, obs, params, atm)))


def levels_along(traj: Trajectory, obs: Observer, params: EngineNoiseParams,
                 atm: Atmosphere = ISA) -> np.ndarray:
    """L_P at every grid node, dB."""
    Z = traj.states
    return np.real(levels_arrays(Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3], Z[:, 4], Z[:, 5],
                                 obs, params, atm))


def leq_from_levels(times, levels):
    """Equivalent continuous level of sampled L_P values, dB.

    Trapezoidal quadrature of 10**(0.1*L_P) over the horizon, divided by
    its length, then back to decibels.
    """
    times = np.asarray(times)
    energy = 10.0 ** (0.1 * np.asarray(levels))
    integral = np.trapezoid(energy, times)
    return 10.0 * np.log10(integral / (times[-1] - times[0]))


def leq(traj: Trajectory, obs: Observer, params: EngineNoiseParams,
        atm: Atmosphere = ISA) -> float:
    """Equivalent continuous level over the whole trajectory, dB."""
    return float(leq_from_levels(traj.times, levels_along(traj, obs, params, atm)))


def total_consumption(traj: Trajectory, model: AircraftModel,
                      atm: Atmosphere = ISA) -> float:
    """Fuel burned over the trajectory, kg (trapezoidal quadrature)."""
    Z = traj.states
    delta = traj.node_controls()[:, 1]
    flows = fuel_flow_arrays(Z[:, 0], Z[:, 5], delta, model, atm)
    return float(np.trapezoid(flows, traj.times))


def breakdown_rows(traj: Trajectory, obs: Observer, params: EngineNoiseParams,
                   atm: Atmosphere = ISA):
    """(header, rows) of the per-node term table, for CSV export."""
    header = ("t",) + TERM_NAMES + ("total",)
    rows = []
    for k in range(traj.n_intervals + 1):
        terms = level_breakdown(traj.state(k), obs, params, atm)
        row = (traj.times[k],) + tuple(getattr(terms, n) for n in TERM_NAMES) + (terms.total,)
        rows.append(row)
    return header, rows
