"""Formula oracles and properties for the atmosphere/forces/dynamics layer.

Expected values are computed by independent straight-line
reimplementations of the formulas (kept deliberately separate from the
package code) or frozen from hand evaluation.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisedescent.errors import DomainError, SingularStateError
from noisedescent.flight_dynamics import (
    ISA,
    AircraftModel,
    Atmosphere,
    Control,
    State,
    air_density,
    drag,
    dynamics_rhs,
    fuel_flow,
    lift,
    rhs_arrays,
    speed_of_sound,
    thrust,
)

MODEL = AircraftModel()


def oracle_density(h):
    return 1.225 * (1.0 - 22.6e-6 * h) ** 4.26


def oracle_sound_speed(h):
    return 340.29 * (oracle_density(h) / 1.225) ** (1.0 / 8.52)


def oracle_rhs(z, u, model=MODEL):
    """Independent evaluation of the six equations of motion."""
    V, gamma, chi, x, y, h = z
    alpha, delta_x, mu = u
    rho = oracle_density(h)
    c = oracle_sound_speed(h)
    M = V / c
    T = model.T0 * delta_x * (rho / model.rho0) * (1.0 - M + M * M / 2.0)
    L = 0.5 * rho * model.S * V * V * model.Cz_alpha * alpha
    D = 0.5 * rho * model.S * V * V * (model.Cx0 + model.k_i * model.Cz_alpha ** 2 * alpha ** 2)
    m, g = model.mass, model.g
    return (
        g * ((T * math.cos(alpha) - D) / (m * g) - math.sin(gamma)),
        ((T * math.sin(alpha) + L) * math.cos(mu) - m * g * math.cos(gamma)) / (m * V),
        (T * math.sin(alpha) + L) * math.sin(mu) / (m * V * math.cos(gamma)),
        V * math.cos(gamma) * math.cos(chi),
        V * math.cos(gamma) * math.sin(chi),
        V * math.sin(gamma),
    )


states = st.builds(
    State,
    V=st.floats(60.0, 250.0),
    gamma=st.floats(-0.3, 0.3),
    chi=st.floats(-1.0, 1.0),
    x=st.floats(-1e5, 1e5),
    y=st.floats(-1e5, 1e5),
    h=st.floats(0.0, 10000.0),
)
controls = st.builds(
    Control,
    alpha=st.floats(-0.1, 0.25),
    delta_x=st.floats(0.0, 1.0),
    mu=st.floats(-0.5, 0.5),
)


class TestAirDensity:
    def test_ground_value(self):
        assert air_density(0.0) == pytest.approx(1.225, abs=0.0)

    def test_at_3500m(self):
        # 1.225*(1 - 22.6e-6*3500)**4.26, evaluated independently
        assert air_density(3500.0) == pytest.approx(0.8623453453886689, rel=1e-12)

    def test_monotone_decreasing(self):
        assert air_density(500.0) > air_density(3500.0)

    @pytest.mark.parametrize("h", [0.0, 500.0, 1000.0, 2000.0, 3500.0])
    def test_matches_oracle(self, h):
        assert air_density(h) == pytest.approx(oracle_density(h), rel=1e-12)

    def test_domain_error_past_model_ceiling(self):
        with pytest.raises(DomainError):
            air_density(1.0 / 22.6e-6 + 1.0)

    def test_random_inputs_against_oracle(self):
        rng = np.random.default_rng(7)
        h = rng.uniform(0.0, 11000.0, size=200)
        assert np.allclose(air_density(h), oracle_density(h), rtol=1e-12)


class TestSpeedOfSound:
    def test_sea_level(self):
        assert speed_of_sound(0.0) == pytest.approx(ISA.c_isa, rel=1e-15)

    def test_at_3500m(self):
        expected = 340.29 * (oracle_density(3500.0) / 1.225) ** (1.0 / 8.52)
        assert speed_of_sound(3500.0) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("h", [0.0, 500.0, 1000.0, 2000.0, 3500.0])
    def test_matches_oracle(self, h):
        assert speed_of_sound(h) == pytest.approx(oracle_sound_speed(h), rel=1e-12)

    def test_strictly_decreasing(self):
        h = np.linspace(0.0, 10000.0, 60)
        c = speed_of_sound(h)
        assert np.all(np.diff(c) < 0)


class TestThrust:
    def test_static_full_throttle_is_rated_thrust(self):
        assert thrust(0.0, 0.0, 1.0, MODEL) == pytest.approx(MODEL.T0, rel=1e-15)

    def test_mach_04_factor(self):
        c0 = speed_of_sound(0.0)
        V = 0.4 * c0
        assert thrust(0.0, V, 1.0, MODEL) == pytest.approx(0.68 * MODEL.T0, rel=1e-12)

    def test_zero_throttle(self):
        assert thrust(2000.0, 100.0, 0.0, MODEL) == 0.0

    def test_rejects_supersonic(self):
        with pytest.raises(DomainError):
            thrust(0.0, 400.0, 1.0, MODEL)

    @given(delta=st.floats(0.0, 1.0), a=st.floats(0.0, 1.0))
    def test_linear_in_throttle(self, delta, a):
        t1 = thrust(1500.0, 120.0, a * delta, MODEL)
        t2 = a * thrust(1500.0, 120.0, delta, MODEL)
        assert t1 == pytest.approx(t2, rel=1e-12, abs=1e-9)


class TestForces:
    def test_zero_alpha_no_lift(self):
        assert lift(1000.0, 100.0, 0.0, MODEL) == 0.0

    def test_zero_alpha_parasite_drag_only(self):
        expected = 0.5 * oracle_density(1000.0) * MODEL.S * 100.0 ** 2 * MODEL.Cx0
        assert drag(1000.0, 100.0, 0.0, MODEL) == pytest.approx(expected, rel=1e-12)

    @given(alpha=st.floats(-0.3, 0.3))
    def test_drag_even_in_alpha(self, alpha):
        assert drag(2000.0, 130.0, alpha, MODEL) == pytest.approx(
            drag(2000.0, 130.0, -alpha, MODEL), rel=1e-14)

    @given(alpha=st.floats(1e-4, 0.3))
    def test_lift_sign_follows_alpha(self, alpha):
        assert lift(2000.0, 130.0, alpha, MODEL) > 0
        assert lift(2000.0, 130.0, -alpha, MODEL) < 0


class TestDynamics:
    def test_trimmed_level_flight_rates_vanish(self):
        # choose (alpha, delta_x) so that T*cos(a)=D and (T*sin(a)+L) = m*g
        V, h = 130.0, 1500.0
        rho = oracle_density(h)
        qS = 0.5 * rho * MODEL.S * V * V

        alpha = 0.1
        for _ in range(60):  # fixed point for the trim pair
            D = qS * (MODEL.Cx0 + MODEL.k_i * MODEL.Cz_alpha ** 2 * alpha ** 2)
            T = D / math.cos(alpha)
            alpha = (MODEL.mass * MODEL.g - T * math.sin(alpha)) / (qS * MODEL.Cz_alpha)
        delta = T / thrust(h, V, 1.0, MODEL)
        state = State(V=V, gamma=0.0, chi=0.0, x=0.0, y=0.0, h=h)
        control = Control(alpha=alpha, delta_x=delta, mu=0.0)
        out = dynamics_rhs(state, control, MODEL)
        assert out.V_dot == pytest.approx(0.0, abs=1e-9)
        assert out.gamma_dot == pytest.approx(0.0, abs=1e-11)
        assert out.h_dot == 0.0

    def test_level_flight_geometry(self):
        state = State(V=120.0, gamma=0.0, chi=0.0, x=10.0, y=-5.0, h=800.0)
        control = Control(alpha=0.05, delta_x=0.5, mu=0.0)
        out = dynamics_rhs(state, control, MODEL)
        assert out.x_dot == pytest.approx(120.0, rel=1e-15)
        assert out.y_dot == 0.0
        assert out.h_dot == 0.0

    @given(state=states, control=controls)
    @settings(max_examples=150, deadline=None)
    def test_matches_independent_formulas(self, state, control):
        got = dynamics_rhs(state, control, MODEL).as_array()
        want = np.array(oracle_rhs(state.as_array(), control.as_array()))
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)

    @given(state=states, control=controls)
    @settings(max_examples=30, deadline=None)
    def test_deterministic(self, state, control):
        a = dynamics_rhs(state, control, MODEL).as_array()
        b = dynamics_rhs(state, control, MODEL).as_array()
        assert np.array_equal(a, b)

    @given(state=states)
    @settings(max_examples=100, deadline=None)
    def test_gliding_only_dissipates(self, state):
        # with T=0 and alpha=0: d/dt(V^2/2 + g h) = -D*V/m <= 0
        control = Control(alpha=0.0, delta_x=0.0, mu=0.0)
        out = dynamics_rhs(state, control, MODEL)
        e_dot = state.V * out.V_dot + MODEL.g * out.h_dot
        D = drag(state.h, state.V, 0.0, MODEL)
        assert e_dot == pytest.approx(-D * state.V / MODEL.mass, rel=1e-9)
        assert e_dot <= 0.0

    def test_singularity_guards(self):
        state = State(V=120.0, gamma=math.pi / 2, chi=0.0, x=0.0, y=0.0, h=100.0)
        control = Control(alpha=0.0, delta_x=0.5, mu=0.0)
        with pytest.raises(SingularStateError):
            dynamics_rhs(state, control, MODEL)
        with pytest.raises(SingularStateError):
            rhs_arrays(1e-12, 0.0, 0.0, 0.0, 0.0, 100.0, 0.0, 0.5, 0.0, MODEL, ISA)


class TestFuelFlow:
    def test_zero_throttle_zero_flow(self):
        s = State(V=100.0, gamma=0.0, chi=0.0, x=0.0, y=0.0, h=500.0)
        assert fuel_flow(s, Control(0.0, 0.0, 0.0), MODEL) == 0.0

    def test_static_full_throttle(self):
        from noisedescent.flight_dynamics import fuel_flow_arrays
        got = fuel_flow_arrays(0.0, 0.0, 1.0, MODEL)
        assert float(got) == pytest.approx(MODEL.C_SR * MODEL.T0, rel=1e-15)

    @given(delta=st.floats(0.0, 0.5))
    def test_doubling_throttle_doubles_flow(self, delta):
        s = State(V=110.0, gamma=-0.02, chi=0.0, x=0.0, y=0.0, h=900.0)
        f1 = fuel_flow(s, Control(0.02, delta, 0.0), MODEL)
        f2 = fuel_flow(s, Control(0.02, 2.0 * delta, 0.0), MODEL)
        assert f2 == pytest.approx(2.0 * f1, rel=1e-12, abs=1e-12)


class TestValidation:
    def test_state_rejects_nonpositive_speed(self):
        with pytest.raises(ValueError):
            State(V=0.0, gamma=0.0, chi=0.0, x=0.0, y=0.0, h=100.0)

    def test_state_rejects_negative_height(self):
        with pytest.raises(ValueError):
            State(V=100.0, gamma=0.0, chi=0.0, x=0.0, y=0.0, h=-1.0)

    def test_aircraft_rejects_nonpositive_parameters(self):
        with pytest.raises(ValueError):
            AircraftModel(mass=-1.0)

    def test_atmosphere_density_positive_decreasing_on_domain(self):
        atm = Atmosphere()
        h = np.linspace(0.0, 11000.0, 100)
        rho = air_density(h, atm)
        assert np.all(rho > 0)
        assert np.all(np.diff(rho) < 0)
