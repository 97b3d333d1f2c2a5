"""Point-mass flight dynamics of a transport aircraft in descent.

Closed-form atmosphere, thrust and aerodynamic force models, the
six-state equations of motion and the fuel-flow integrand.  Everything
here is a pure function over immutable inputs.

All evaluation routines accept scalars or numpy arrays and are
complex-step safe: feeding complex inputs propagates derivative
information through every branch, which the transcription layer uses to
build machine-precision Jacobians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularStateError

# State vector component order: (V, gamma, chi, x, y, h).
IV, IGAMMA, ICHI, IX, IY, IH = range(6)
STATE_NAMES = ("V", "gamma", "chi", "x", "y", "h")

# Control vector component order: (alpha, delta_x, mu).
IALPHA, IDELTA_X, IMU = range(3)
CONTROL_NAMES = ("alpha", "delta_x", "mu")

_SINGULARITY_EPS = 1e-9


@dataclass(frozen=True)
class State:
    """Motion variables at one instant. SI units."""

    V: float      # airspeed, m/s
    gamma: float  # flight path angle, rad
    chi: float    # yaw angle, rad
    x: float      # horizontal distance, m
    y: float      # lateral distance, m
    h: float      # height, m

    def __post_init__(self):
        vals = (self.V, self.gamma, self.chi, self.x, self.y, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite state: {vals}")
        if self.V <= 0.0:
            raise ValueError(f"airspeed must be positive, got {self.V}")
        if self.h < 0.0:
            raise ValueError(f"height must be nonnegative, got {self.h}")

    def as_array(self) -> np.ndarray:
        return np.array([self.V, self.gamma, self.chi, self.x, self.y, self.h])

    @classmethod
    def from_array(cls, z) -> "State":
        return cls(*(float(v) for v in z))


@dataclass(frozen=True)
class Control:
    """Control inputs held on one grid interval."""

    alpha: float    # angle of attack, rad
    delta_x: float  # throttle setting, dimensionless
    mu: float       # roll angle, rad

    def __post_init__(self):
        vals = (self.alpha, self.delta_x, self.mu)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite control: {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.delta_x, self.mu])

    @classmethod
    def from_array(cls, u) -> "Control":
        return cls(*(float(v) for v in u))


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of the six motion variables, SI units per second."""

    V_dot: float
    gamma_dot: float
    chi_dot: float
    x_dot: float
    y_dot: float
    h_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.V_dot, self.gamma_dot, self.chi_dot,
                         self.x_dot, self.y_dot, self.h_dot])


@dataclass(frozen=True)
class Atmosphere:
    """Sea-level reference values and the density power law.

    Density decreases as rho_isa * (1 - lapse*h)**exponent, valid for
    h < 1/lapse.  The speed of sound follows the same law with the
    ISA-consistent exponent 1/(2*exponent) so that Mach numbers in the
    propulsion and noise models share one atmosphere.
    """

    rho_isa: float = 1.225    # sea-level density, kg/m^3
    c_isa: float = 340.29     # sea-level speed of sound, m/s
    lapse: float = 22.6e-6    # density lapse coefficient, 1/m
    exponent: float = 4.26    # density power-law exponent

    def __post_init__(self):
        if min(self.rho_isa, self.c_isa, self.lapse, self.exponent) <= 0:
            raise ValueError("atmosphere parameters must be strictly positive")

    @property
    def max_height(self) -> float:
        """Height at which the density law reaches zero, m."""
        return 1.0 / self.lapse


ISA = Atmosphere()


@dataclass(frozen=True)
class AircraftModel:
    """Mass, aerodynamic and propulsion parameters of one aircraft.

    Defaults are representative of a two-engine narrow-body transport in
    approach configuration; they are placeholders chosen for
    reproducibility, not published data, and every field can be
    overridden from the config file.  Cx0 reflects the high-drag
    (gear/flaps) configuration: with a clean-wing value the fixed-time
    descent cannot dissipate enough energy against the throttle floor
    and the reference scenario has no feasible trajectory.
    """

    mass: float = 60000.0      # kg
    S: float = 122.0           # wing area, m^2
    Cz_alpha: float = 5.0      # lift-curve slope, 1/rad
    Cx0: float = 0.075         # zero-lift drag coefficient, approach config
    k_i: float = 0.05          # induced drag parameter
    T0: float = 234000.0       # full thrust (both engines), N
    C_SR: float = 1.0e-5       # specific fuel consumption, kg/(N*s)
    g: float = 9.8             # m/s^2
    rho0: float = 1.225        # reference density for the thrust law, kg/m^3

    def __post_init__(self):
        for name in ("mass", "S", "Cz_alpha", "Cx0", "k_i", "T0", "C_SR", "g", "rho0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"aircraft parameter {name} must be strictly positive")


def air_density(h, atm: Atmosphere = ISA):
    """Density at height h: rho_isa * (1 - lapse*h)**exponent, kg/m^3."""
    base = 1.0 - atm.lapse * np.asarray(h)
    if np.any(np.real(base) <= 0.0):
        raise DomainError(
            f"height beyond density-law domain (h must stay below {atm.max_height:.0f} m)")
    return atm.rho_isa * base ** atm.exponent


def speed_of_sound(h, atm: Atmosphere = ISA):
    """Speed of sound at height h, m/s.

    Closes the density power law consistently: temperature varies as
    rho**(1/exponent) along the law, and c ~ sqrt(temperature), so
    c = c_isa * (rho/rho_isa)**(1/(2*exponent)).
    """
    ratio = air_density(h, atm) / atm.rho_isa
    return atm.c_isa * ratio ** (1.0 / (2.0 * atm.exponent))


def mach_number(h, V, atm: Atmosphere = ISA):
    """Flight Mach number V/c(h)."""
    return np.asarray(V) / speed_of_sound(h, atm)


def thrust(h, V, delta_x, model: AircraftModel, atm: Atmosphere = ISA):
    """Available thrust T0 * delta_x * (rho/rho0) * (1 - M + M^2/2), N.

    The Mach factor is a subsonic fit; it grows again past M = 1, so
    supersonic inputs are rejected rather than extrapolated.
    """
    M = mach_number(h, V, atm)
    if np.any(np.real(M) >= 1.0):
        raise DomainError("thrust model is valid for M < 1 only")
    rho = air_density(h, atm)
    return model.T0 * np.asarray(delta_x) * (rho / model.rho0) * (1.0 - M + 0.5 * M * M)


def lift(h, V, alpha, model: AircraftModel, atm: Atmosphere = ISA):
    """Lift 0.5*rho*S*V^2*Cz_alpha*alpha, N. Sign follows alpha."""
    q = 0.5 * air_density(h, atm) * np.asarray(V) ** 2
    return q * model.S * model.Cz_alpha * np.asarray(alpha)


def drag(h, V, alpha, model: AircraftModel, atm: Atmosphere = ISA):
    """Drag 0.5*rho*S*V^2*(Cx0 + k_i*Cz_alpha^2*alpha^2), N."""
    q = 0.5 * air_density(h, atm) * np.asarray(V) ** 2
    cz2 = model.Cz_alpha ** 2
    return q * model.S * (model.Cx0 + model.k_i * cz2 * np.asarray(alpha) ** 2)


def rhs_arrays(V, gamma, chi, x, y, h, alpha, delta_x, mu,
               model: AircraftModel, atm: Atmosphere = ISA):
    """Equations of motion evaluated componentwise on arrays.

    Returns the six derivative arrays (V_dot, gamma_dot, chi_dot,
    x_dot, y_dot, h_dot).  Raises SingularStateError when V or
    cos(gamma) is numerically zero (the chi equation divides by both).
    The atmosphere and forces are evaluated once, inline: this is the
    innermost loop of the transcription machinery.
    """
    V = np.asarray(V)
    gamma = np.asarray(gamma)
    alpha = np.asarray(alpha)
    if np.any(np.real(V) < _SINGULARITY_EPS):
        raise SingularStateError("airspeed too close to zero for the equations of motion")
    cos_gamma = np.cos(gamma)
    if np.any(np.abs(np.real(cos_gamma)) < _SINGULARITY_EPS):
        raise SingularStateError("cos(gamma) too close to zero for the yaw equation")

    rho = air_density(h, atm)
    c = atm.c_isa * (rho / atm.rho_isa) ** (1.0 / (2.0 * atm.exponent))
    M = V / c
    if np.any(np.real(M) >= 1.0):
        raise DomainError("thrust model is valid for M < 1 only")
    T = model.T0 * np.asarray(delta_x) * (rho / model.rho0) * (1.0 - M + 0.5 * M * M)
    qS = 0.5 * rho * model.S * V * V
    L = qS * model.Cz_alpha * alpha
    D = qS * (model.Cx0 + model.k_i * model.Cz_alpha ** 2 * alpha * alpha)
    m, g = model.mass, model.g

    sin_gamma = np.sin(gamma)
    normal_force = (T * np.sin(alpha) + L)

    V_dot = (T * np.cos(alpha) - D) / m - g * sin_gamma
    gamma_dot = (normal_force * np.cos(mu) - m * g * cos_gamma) / (m * V)
    chi_dot = normal_force * np.sin(mu) / (m * V * cos_gamma)
    x_dot = V * cos_gamma * np.cos(chi)
    y_dot = V * cos_gamma * np.sin(chi)
    h_dot = V * sin_gamma
    return V_dot, gamma_dot, chi_dot, x_dot, y_dot, h_dot


def dynamics_rhs(state: State, control: Control,
                 model: AircraftModel, atm: Atmosphere = ISA) -> StateDerivative:
    """Right-hand side of the equations of motion at one state."""
    out = rhs_arrays(state.V, state.gamma, state.chi, state.x, state.y, state.h,
                     control.alpha, control.delta_x, control.mu, model, atm)
    return StateDerivative(*(float(v) for v in out))


def fuel_flow_arrays(V, h, delta_x, model: AircraftModel, atm: Atmosphere = ISA):
    """Fuel mass flow C_SR * T(h, V, delta_x), kg/s, on arrays."""
    return model.C_SR * thrust(h, V, delta_x, model, atm)


def fuel_flow(state: State, control: Control,
              model: AircraftModel, atm: Atmosphere = ISA) -> float:
    """Fuel mass flow at one state, kg/s."""
    return float(fuel_flow_arrays(state.V, state.h, control.delta_x, model, atm))
