"""Ego-vehicle dynamics: rigid body, suspension, powertrain, steering, tires, brakes, drag."""

from .params import (
    CALIBRATION_SPEED,
    CORNER_NAMES,
    GRAVITY,
    ControlInput,
    CornerParams,
    Drivetrain,
    Lights,
    SplineControlPoints,
    VehicleParams,
    VehicleState,
    default_vehicle_params,
)
from .submodels import (
    ackermann_angles,
    aero_case,
    aero_drag,
    aggregate_inertia,
    apply_steering,
    brake_torque,
    differential_split,
    engine_rpm_from_speed,
    engine_torque,
    powertrain_torque,
    select_gear,
    suspension_coefficients,
    suspension_force,
    update_engine_state,
    wheel_rpm_from_speed,
)
from .tire import TireSpline, fit_tire_spline, tire_force
from .vehicle import DEFAULT_DT, VehicleModel, step

__all__ = [
    "CALIBRATION_SPEED", "CORNER_NAMES", "GRAVITY", "DEFAULT_DT",
    "ControlInput", "CornerParams", "Drivetrain", "Lights", "SplineControlPoints",
    "TireSpline", "VehicleModel", "VehicleParams", "VehicleState",
    "ackermann_angles", "aero_case", "aero_drag", "aggregate_inertia", "apply_steering",
    "brake_torque", "default_vehicle_params", "differential_split", "engine_rpm_from_speed",
    "engine_torque", "fit_tire_spline", "powertrain_torque", "select_gear", "step",
    "suspension_coefficients", "suspension_force", "tire_force", "update_engine_state",
    "wheel_rpm_from_speed",
]
