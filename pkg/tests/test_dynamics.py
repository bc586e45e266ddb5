import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proving_ground.dynamics import (
    CALIBRATION_SPEED,
    ControlInput,
    CornerParams,
    Drivetrain,
    SplineControlPoints,
    VehicleModel,
    VehicleState,
    ackermann_angles,
    aero_case,
    aero_drag,
    aggregate_inertia,
    apply_steering,
    brake_torque,
    default_vehicle_params,
    differential_split,
    engine_torque,
    fit_tire_spline,
    powertrain_torque,
    select_gear,
    suspension_coefficients,
    suspension_force,
    tire_force,
    update_engine_state,
)
from proving_ground.errors import InvalidParameterError, SimulationDiverged

# Frozen oracles, evaluated by hand / with 30-digit mpmath independently of this package.
BRAKE_500KG_D50_R018 = 647.497027584
ACKERMANN_INNER_03 = 0.327134702968938441
ACKERMANN_OUTER_03 = 0.276914526217379040

TOL = 1e-9


@pytest.fixture(scope="module")
def params():
    return default_vehicle_params()


@pytest.fixture(scope="module")
def model(params):
    return VehicleModel(params)


def corner(mass, x, y):
    return CornerParams(mass, 20.0, 9.0, 0.3, (x, y, 0.0))


class TestInertia:
    def test_symmetric_layout_centres_mass(self):
        corners = [corner(500.0, sx * 1.4, sy * 0.8) for sx in (1, -1) for sy in (1, -1)]
        total, com, inertia = aggregate_inertia(corners)
        assert total == 2000.0
        assert list(com) == pytest.approx([0.0, 0.0, 0.0], abs=TOL)
        assert inertia == pytest.approx(2000.0 * (1.4 ** 2 + 0.8 ** 2), abs=TOL)

    def test_front_heavy_com_shift(self):
        corners = [corner(600.0, 1.4, 0.8), corner(600.0, 1.4, -0.8),
                   corner(400.0, -1.4, 0.8), corner(400.0, -1.4, -0.8)]
        _, com, _ = aggregate_inertia(corners)
        assert com[0] == pytest.approx(0.28, abs=TOL)

    def test_single_corner_at_origin_has_no_inertia(self):
        _, _, inertia = aggregate_inertia([corner(500.0, 0.0, 0.0)])
        assert inertia == 0.0

    def test_rejects_empty(self):
        with pytest.raises(InvalidParameterError):
            aggregate_inertia([])


class TestSuspension:
    @pytest.mark.parametrize("args, expected", [
        ((500.0, 2.0, 0.5), (2000.0, 1000.0)),
        ((500.0, 2.0, 0.0), (2000.0, 0.0)),
        ((1.0, 1.0, 1.0), (1.0, 2.0)),
    ])
    def test_coefficients(self, args, expected):
        K, B = suspension_coefficients(*args)
        assert K == pytest.approx(expected[0], abs=TOL)
        assert B == pytest.approx(expected[1], abs=TOL)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1.0, 5000.0), st.floats(0.1, 30.0), st.floats(0.0, 2.0))
    def test_coefficients_round_trip(self, mass, wn, zeta):
        K, B = suspension_coefficients(mass, wn, zeta)
        assert math.sqrt(K / mass) == pytest.approx(wn, rel=1e-12)
        assert B / (2.0 * math.sqrt(K * mass)) == pytest.approx(zeta, rel=1e-12, abs=1e-12)

    def test_force_examples(self):
        c = corner(500.0, 0.0, 0.0)
        assert suspension_force(c, 0.3, 0.1, 0.3, 0.1, gravity=False, coefficients=(2000.0, 1000.0)) == 0.0
        assert suspension_force(c, 0.1, 0.0, 0.0, 0.0, gravity=False,
                                coefficients=(2000.0, 1000.0)) == pytest.approx(-200.0, abs=TOL)
        assert suspension_force(c, 0.0, 0.2, 0.0, 0.0, gravity=False,
                                coefficients=(2000.0, 1000.0)) == pytest.approx(-200.0, abs=TOL)

    def test_gravity_pulls_wheel_down(self):
        c = corner(500.0, 0.0, 0.0)
        assert suspension_force(c, 0.0, 0.0, 0.0, 0.0) == pytest.approx(-20.0 * 9.81)

    def test_rejects_bad_inputs(self):
        with pytest.raises(InvalidParameterError):
            suspension_coefficients(0.0, 1.0, 0.1)


class TestPowertrain:
    def _params(self, ratios=(3.0, 1.0, -3.0)):
        import dataclasses
        return dataclasses.replace(default_vehicle_params(), gear_ratios=ratios, final_drive=4.0,
                                   engine_torque_curve=((1000.0, 300.0), (5000.0, 300.0)))

    def test_zero_throttle(self):
        assert powertrain_torque(0.0, 3000.0, 1, self._params()) == 0.0

    def test_full_throttle_forward_and_reverse(self):
        p = self._params()
        assert powertrain_torque(1.0, 3000.0, 1, p) == pytest.approx(3600.0, abs=TOL)
        assert powertrain_torque(1.0, 3000.0, -1, p) == pytest.approx(-3600.0, abs=TOL)

    def test_curve_clamps_outside_domain(self, params):
        assert engine_torque(params.engine_torque_curve, 0.0) == 300.0
        assert engine_torque(params.engine_torque_curve, 9000.0) == 0.0
        assert engine_torque(params.engine_torque_curve, 5500.0) == pytest.approx(150.0)

    def test_engine_target_from_wheel_speed(self):
        import dataclasses
        p = dataclasses.replace(self._params(), rpm_time_constant=1e-12)
        omega = 200.0 * 2.0 * math.pi / 60.0
        state = VehicleState(wheel_omega=(omega,) * 4, engine_rpm=p.idle_rpm, gear=1)
        rpm, _ = update_engine_state(state, dataclasses.replace(p, shift_up_rpm=1e6, shift_down_rpm=1.0))
        assert rpm == pytest.approx(p.idle_rpm + 2400.0, abs=1e-6)

    def test_idle_fixed_point(self, params):
        rpm, gear = update_engine_state(VehicleState(engine_rpm=params.idle_rpm, gear=1), params)
        assert (rpm, gear) == (params.idle_rpm, 1)

    def test_shift_thresholds(self, params):
        assert select_gear(params.shift_up_rpm + 1, 1, params) == 2
        assert select_gear(params.shift_down_rpm - 1, 3, params) == 2
        assert select_gear(params.shift_up_rpm + 1, params.forward_gears, params) == params.forward_gears
        assert select_gear(params.shift_up_rpm + 1, -1, params) == -1


class TestDifferential:
    def test_straight_awd(self):
        assert differential_split(4000.0, 0.0, Drivetrain.AWD, 0.5) == (1000.0, 1000.0)

    def test_rwd_halves(self):
        assert differential_split(4000.0, 0.0, Drivetrain.RWD, 0.5) == (2000.0, 2000.0)

    def test_drop_is_clamped(self):
        left, right = differential_split(4000.0, 0.6, Drivetrain.AWD, 2.0)
        assert left == pytest.approx(1000.0, abs=TOL)
        assert right == pytest.approx(100.0, abs=TOL)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-0.6, 0.6), st.floats(0.0, 5.0), st.floats(1.0, 1e4))
    def test_each_side_bounded(self, steer, drop, total):
        left, right = differential_split(total, steer, Drivetrain.FWD, drop)
        diff = total / 2.0
        for side in (left, right):
            assert 0.1 * diff - 1e-9 <= side <= diff + 1e-9


class TestBrake:
    def test_golden(self):
        got = brake_torque(500.0, CALIBRATION_SPEED, 50.0, 0.18, 1.0)
        assert got == pytest.approx(BRAKE_500KG_D50_R018, abs=TOL)

    def test_linear_in_pedal(self):
        full = brake_torque(500.0, CALIBRATION_SPEED, 50.0, 0.18, 1.0)
        assert brake_torque(500.0, CALIBRATION_SPEED, 50.0, 0.18, 0.5) == pytest.approx(full / 2, abs=TOL)
        assert brake_torque(500.0, CALIBRATION_SPEED, 50.0, 0.18, 0.0) == 0.0

    def test_rejects_zero_distance(self):
        with pytest.raises(InvalidParameterError):
            brake_torque(500.0, CALIBRATION_SPEED, 0.0, 0.18, 1.0)


class TestSteering:
    def test_ackermann_golden(self):
        left, right = ackermann_angles(0.3, 2.8, 1.6)
        assert left == pytest.approx(ACKERMANN_INNER_03, abs=TOL)
        assert right == pytest.approx(ACKERMANN_OUTER_03, abs=TOL)

    def test_ackermann_zero_and_antisymmetry(self):
        assert ackermann_angles(0.0, 2.8, 1.6) == (0.0, 0.0)
        left, right = ackermann_angles(0.3, 2.8, 1.6)
        nl, nr = ackermann_angles(-0.3, 2.8, 1.6)
        assert (nl, nr) == pytest.approx((-right, -left), abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-6, 1.2))
    def test_inner_wheel_turns_more(self, steer):
        inner, outer = ackermann_angles(steer, 2.8, 1.6)
        assert inner > steer > outer > 0

    def test_rate_limited_step(self):
        import dataclasses
        p = dataclasses.replace(default_vehicle_params(), steer_sensitivity=1.0, steer_speed_factor=-0.5,
                                max_steer=1.5)
        assert apply_steering(0.0, 1.0, p.v_max, p, 0.1) == pytest.approx(0.05, abs=TOL)
        assert apply_steering(0.0, 0.01, p.v_max, p, 0.1) == 0.01
        assert apply_steering(0.2, 0.2, 0.0, p, 0.1) == 0.2

    def test_command_clamped_to_limit(self, params):
        out = 0.0
        for _ in range(1000):
            out = apply_steering(out, 5.0, 0.0, params, 0.01)
        assert out == params.max_steer


class TestTireSpline:
    POINTS = SplineControlPoints((0.0, 0.0), (0.2, 1.0), (0.6, 0.75))

    def test_interpolation_conditions(self):
        f = fit_tire_spline(self.POINTS)
        assert f(0.0) == pytest.approx(0.0, abs=TOL)
        assert f(0.2) == pytest.approx(1.0, abs=TOL)
        assert f.derivative(0.2) == pytest.approx(0.0, abs=TOL)
        assert f(0.6) == pytest.approx(0.75, abs=TOL)

    def test_hermite_midpoints(self):
        f = fit_tire_spline(self.POINTS)
        assert f(0.4) == pytest.approx(0.875, abs=TOL)
        assert f(0.1) == pytest.approx(0.75, abs=TOL)

    def test_continuity_at_extremum(self):
        f = fit_tire_spline(self.POINTS)
        eps = 1e-10
        assert f(0.2 - eps) == pytest.approx(f(0.2 + eps), abs=1e-9)
        assert f.derivative(0.2 - eps) == pytest.approx(f.derivative(0.2 + eps), abs=1e-8)

    def test_monotone_rise_for_defaults(self, params):
        f = fit_tire_spline(params.tire_long)
        xs = [params.tire_long.extremum[0] * i / 500 for i in range(501)]
        ys = [f(x) for x in xs]
        assert all(b >= a - 1e-12 for a, b in zip(ys, ys[1:]))

    def test_flat_beyond_asymptote(self):
        f = fit_tire_spline(self.POINTS)
        assert f(5.0) == 0.75

    def test_force_scaling_and_symmetry(self):
        f = fit_tire_spline(self.POINTS)
        assert tire_force(f, 0.0, 4000.0) == 0.0
        assert tire_force(f, 0.2, 4000.0) == pytest.approx(4000.0, abs=1e-6)
        assert tire_force(f, -0.2, 4000.0) == pytest.approx(-4000.0, abs=1e-6)
        assert tire_force(f, 0.2, 4000.0, traction=0.5) == pytest.approx(2000.0, abs=1e-6)

    def test_rejects_bad_ordering(self):
        with pytest.raises(InvalidParameterError):
            SplineControlPoints((0.0, 0.0), (0.6, 1.0), (0.2, 0.75))


class TestAero:
    def test_cases_in_order(self, params):
        assert aero_case(VehicleState(v=params.v_max, tau_out=0.0), params) == "max"
        assert aero_case(VehicleState(v=10.0, tau_out=0.0), params) == "idle"
        reversing = VehicleState(v=-params.v_rev, gear=-1, wheel_omega=(-20.0,) * 4, tau_out=-100.0)
        assert aero_case(reversing, params) == "rev"
        assert aero_case(VehicleState(v=10.0, tau_out=500.0), params) == "run"

    def test_drag_values_oppose_motion(self, params):
        assert aero_drag(VehicleState(v=params.v_max), params) == -params.drag_max
        assert aero_drag(VehicleState(v=10.0), params) == -params.drag_idle
        assert aero_drag(VehicleState(v=10.0, tau_out=500.0), params) == -params.drag_run
        assert aero_drag(VehicleState(v=-params.v_rev, gear=-1, wheel_omega=(-20.0,) * 4, tau_out=-1.0),
                         params) == params.drag_rev

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-50, 50), st.floats(-5000, 5000), st.sampled_from([-1, 1, 2, 6]), st.floats(-200, 200))
    def test_exactly_one_case(self, v, tau, gear, omega):
        p = default_vehicle_params()
        case = aero_case(VehicleState(v=v, tau_out=tau, gear=gear, wheel_omega=(omega,) * 4), p)
        assert case in {"max", "idle", "rev", "run"}


def run(model, state, control, ticks, **kw):
    out = [state]
    for _ in range(ticks):
        state = model.step(state, control, **kw)
        out.append(state)
    return out


class TestStep:
    def test_rest_is_equilibrium(self, model):
        states = run(model, model.initial_state(), ControlInput(), 200)
        for a, b in zip(states, states[1:]):
            assert math.hypot(b.x - a.x, b.y - a.y) < 1e-9

    def test_full_throttle_accelerates(self, model):
        states = run(model, model.initial_state(), ControlInput(throttle=1.0), 100)
        speeds = [s.v for s in states[1:]]
        assert all(b > a for a, b in zip(speeds, speeds[1:]))

    def test_coasting_never_gains_energy(self, model):
        states = run(model, model.initial_state(v=20.0), ControlInput(), 300)
        speeds = [abs(s.v) for s in states]
        assert all(b <= a + 1e-12 for a, b in zip(speeds, speeds[1:]))

    def test_braking_from_calibration_speed(self, model, params):
        state = model.initial_state(v=CALIBRATION_SPEED)
        x0 = state.x
        for _ in range(2000):
            state = model.step(state, ControlInput(brake=1.0))
            if state.v <= 1e-3:
                break
        assert abs(state.x - x0 - params.braking_distance) <= 0.1 * params.braking_distance

    def test_bit_identical_runs(self, model):
        control = ControlInput(throttle=0.7, steering=0.1)
        a = run(model, model.initial_state(), control, 150)
        b = run(model, model.initial_state(), control, 150)
        assert [s.as_dict() for s in a] == [s.as_dict() for s in b]

    def test_steering_turns_left(self, model):
        states = run(model, model.initial_state(v=10.0), ControlInput(throttle=0.3, steering=0.2), 200)
        assert states[-1].yaw > 0 and states[-1].y > 0

    def test_low_traction_brakes_longer(self, model):
        from proving_ground.scenario import derive_conditions

        def distance(conditions):
            s = model.initial_state(v=20.0)
            for _ in range(3000):
                s = model.step(s, ControlInput(brake=1.0), conditions=conditions)
                if s.v <= 1e-3:
                    return s.x
            raise AssertionError("vehicle never stopped")

        assert distance(derive_conditions("1pm", "heavy_snow")) > distance(derive_conditions("1pm", "clear"))

    def test_wheel_revolutions_accumulate(self, model):
        states = run(model, model.initial_state(v=10.0), ControlInput(throttle=0.2), 50)
        assert all(r > 0 for r in states[-1].wheel_revs)

    def test_non_finite_state_diverges(self, model):
        state = model.initial_state(v=10.0)
        state.v = float("nan")
        with pytest.raises(SimulationDiverged):
            model.step(state, ControlInput())

    def test_rejects_bad_dt(self, model):
        with pytest.raises(ValueError):
            model.step(model.initial_state(), ControlInput(), dt=0.0)

    def test_control_validation(self):
        with pytest.raises(InvalidParameterError):
            ControlInput(throttle=1.5)
