"""Closed-form vehicle sub-models: inertia, suspension, powertrain, brakes, steering, drag."""

from __future__ import annotations

import bisect
import math

import numpy as np

from ..errors import InvalidParameterError
from .params import (
    CALIBRATION_SPEED,
    GRAVITY,
    CornerParams,
    Drivetrain,
    VehicleParams,
    VehicleState,
)

# clamp applied to torque_drop * |steer| on each side of the differential
MAX_TORQUE_DROP = 0.9


def aggregate_inertia(corners) -> tuple[float, np.ndarray, float]:
    """Total sprung mass, centre of mass and scalar moment of inertia about it."""
    if len(corners) < 1:
        raise InvalidParameterError("at least one corner is required")
    masses = []
    for c in corners:
        if not c.sprung_mass > 0:
            raise InvalidParameterError(f"corner mass must be > 0, got {c.sprung_mass}")
        masses.append(c.sprung_mass)
    X = np.array([c.mount_position for c in corners], dtype=float)
    m = np.array(masses)
    total = float(m.sum())
    com = (m[:, None] * X).sum(axis=0) / total
    inertia = float((m * ((X - com) ** 2).sum(axis=1)).sum())
    return total, com, inertia


def suspension_coefficients(sprung_mass: float, natural_frequency: float, damping_ratio: float) -> tuple[float, float]:
    if not (sprung_mass > 0 and natural_frequency > 0 and damping_ratio >= 0):
        raise InvalidParameterError(
            f"need sprung_mass > 0, natural_frequency > 0, damping_ratio >= 0; "
            f"got {sprung_mass}, {natural_frequency}, {damping_ratio}")
    K = sprung_mass * natural_frequency ** 2
    B = 2.0 * damping_ratio * math.sqrt(K * sprung_mass)
    return K, B


def suspension_force(corner: CornerParams, z: float, z_rate: float, Z: float, Z_rate: float,
                     *, gravity: bool = True, coefficients: tuple[float, float] | None = None) -> float:
    """Vertical force on the wheel body, positive up.

    ``z`` is the wheel height and ``Z`` the sprung-corner height. With
    ``gravity`` the wheel weight ``-m*g`` is included.
    """
    K, B = coefficients or suspension_coefficients(
        corner.sprung_mass, corner.natural_frequency, corner.damping_ratio)
    f = -(B * (z_rate - Z_rate) + K * (z - Z))
    if gravity:
        f -= corner.wheel_mass * GRAVITY
    return f


def engine_torque(curve, rpm: float) -> float:
    """Piecewise-linear lookup, clamped to the end points outside the curve domain."""
    if rpm <= curve[0][0]:
        return curve[0][1]
    if rpm >= curve[-1][0]:
        return curve[-1][1]
    i = bisect.bisect_right([p[0] for p in curve], rpm)
    (r0, t0), (r1, t1) = curve[i - 1], curve[i]
    return t0 + (t1 - t0) * (rpm - r0) / (r1 - r0)


def powertrain_torque(throttle: float, engine_rpm: float, gear: int, params: VehicleParams,
                      smoothing: float = 1.0) -> float:
    """Total drive torque; ``smoothing`` is the throttle engagement factor in [0, 1]."""
    return (engine_torque(params.engine_torque_curve, engine_rpm)
            * params.gear_ratio(gear) * params.final_drive * throttle * smoothing)


def smooth_throttle(gain: float, throttle: float, dt: float, time_constant: float) -> float:
    """First-order engagement toward 1 while throttle is applied, toward 0 otherwise."""
    target = 1.0 if throttle > 0.0 else 0.0
    return gain + (target - gain) * (1.0 - math.exp(-dt / time_constant))


def wheel_rpm_from_speed(v: float, tire_radius: float) -> float:
    """Wheel RPM that rolls without slip at ``v`` m/s."""
    return v * 60.0 / (2.0 * math.pi * tire_radius)


def engine_rpm_from_speed(v: float, params: VehicleParams, gear: int) -> float:
    """Transmission-side engine speed implied by road speed in the given gear."""
    return wheel_rpm_from_speed(abs(v), params.tire_radius) * params.final_drive * abs(params.gear_ratio(gear))


def select_gear(engine_rpm: float, gear: int, params: VehicleParams) -> int:
    if gear < 1:
        return gear
    if engine_rpm > params.shift_up_rpm and gear < params.forward_gears:
        return gear + 1
    if engine_rpm < params.shift_down_rpm and gear > 1:
        return gear - 1
    return gear


def update_engine_state(state: VehicleState, params: VehicleParams, dt: float = 0.01,
                        reverse: bool = False) -> tuple[float, int]:
    gear = state.gear
    # reverse only on explicit request, and only once nearly stopped
    if abs(state.v) < 0.5:
        if reverse and gear != -1:
            gear = -1
        elif not reverse and gear == -1:
            gear = 1
    mean_abs_rpm = sum(abs(w) for w in state.wheel_omega) * (60.0 / (2.0 * math.pi)) / 4.0
    target = params.idle_rpm + mean_abs_rpm * params.final_drive * abs(params.gear_ratio(gear))
    alpha = 1.0 - math.exp(-dt / params.rpm_time_constant)
    rpm = max(params.idle_rpm, state.engine_rpm + (target - state.engine_rpm) * alpha)
    new_gear = select_gear(rpm, gear, params)
    if new_gear != gear:
        # engine speed re-syncs through the new ratio, which prevents cascaded shifts
        ratio = params.gear_ratio(new_gear) / params.gear_ratio(gear)
        rpm = max(params.idle_rpm, params.idle_rpm + (rpm - params.idle_rpm) * ratio)
    return rpm, new_gear


def differential_split(tau_total: float, steering: float, drivetrain, torque_drop: float) -> tuple[float, float]:
    """Left/right wheel torque on each driven axle."""
    tau_diff = tau_total / (4.0 if Drivetrain(drivetrain) is Drivetrain.AWD else 2.0)
    drop_left = min(max(torque_drop * abs(min(steering, 0.0)), 0.0), MAX_TORQUE_DROP)
    drop_right = min(max(torque_drop * abs(max(steering, 0.0)), 0.0), MAX_TORQUE_DROP)
    return tau_diff * (1.0 - drop_left), tau_diff * (1.0 - drop_right)


def brake_torque(sprung_mass: float, v: float, braking_distance: float, disk_radius: float,
                 brake: float) -> float:
    """Brake torque magnitude for a corner; pass ``CALIBRATION_SPEED`` as ``v`` for fixed capacity."""
    if not braking_distance > 0:
        raise InvalidParameterError("braking_distance must be > 0")
    return brake * sprung_mass * v * v / (2.0 * braking_distance) * disk_radius


def brake_capacity(corner: CornerParams, params: VehicleParams) -> float:
    return brake_torque(corner.sprung_mass, CALIBRATION_SPEED, params.braking_distance,
                        params.brake_disk_radius, 1.0)


def ackermann_angles(steering: float, wheelbase: float, track_width: float) -> tuple[float, float]:
    """Left and right road-wheel angles; the inner wheel turns more."""
    t = math.tan(steering)
    num = 2.0 * wheelbase * t
    left = math.atan(num / (2.0 * wheelbase - track_width * t))
    right = math.atan(num / (2.0 * wheelbase + track_width * t))
    return left, right


def steering_rate(v: float, params: VehicleParams) -> float:
    return abs(params.steer_sensitivity + params.steer_speed_factor * abs(v) / params.v_max)


def apply_steering(steering: float, command: float, v: float, params: VehicleParams, dt: float) -> float:
    """Slew the steering angle toward the command at the speed-dependent rate limit."""
    if not dt > 0:
        raise InvalidParameterError("dt must be > 0")
    lim = params.max_steer
    command = min(max(command, -lim), lim)
    max_step = steering_rate(v, params) * dt
    err = command - steering
    if abs(err) <= max_step:
        out = command
    else:
        out = steering + math.copysign(max_step, err)
    return min(max(out, -lim), lim)


def aero_case(state: VehicleState, params: VehicleParams, tau_out: float | None = None) -> str:
    tau = state.tau_out if tau_out is None else tau_out
    speed = abs(state.v)
    if speed >= params.v_max:
        return "max"
    if tau == 0.0:
        return "idle"
    if speed >= params.v_rev and state.gear == -1 and state.mean_wheel_rpm < 0.0:
        return "rev"
    return "run"


def aero_drag(state: VehicleState, params: VehicleParams, tau_out: float | None = None) -> float:
    """Signed drag force along the body x axis (opposes the velocity)."""
    case = aero_case(state, params, tau_out)
    magnitude = {"max": params.drag_max, "idle": params.drag_idle,
                 "rev": params.drag_rev, "run": params.drag_run}[case]
    if state.v == 0.0:
        return 0.0
    return -math.copysign(magnitude, state.v)
