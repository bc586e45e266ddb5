"""Calibration constants, control inputs and the evolving state of the ego vehicle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import InvalidParameterError
from ..geometry import planar_pose

GRAVITY = 9.81
# 60 MPH in m/s; the brake model is calibrated at this speed
CALIBRATION_SPEED = 26.8224


class Drivetrain(str, Enum):
    FWD = "FWD"
    RWD = "RWD"
    AWD = "AWD"


class Lights(str, Enum):
    OFF = "off"
    LOW_BEAM = "low_beam"
    HIGH_BEAM = "high_beam"
    FOG = "fog"


# corner order used everywhere: front-left, front-right, rear-left, rear-right
CORNER_NAMES = ("FL", "FR", "RL", "RR")


@dataclass(frozen=True)
class CornerParams:
    sprung_mass: float
    wheel_mass: float
    natural_frequency: float
    damping_ratio: float
    mount_position: tuple[float, float, float]

    def __post_init__(self):
        if not self.sprung_mass > 0:
            raise InvalidParameterError(f"sprung_mass must be > 0, got {self.sprung_mass}")
        if not self.wheel_mass > 0:
            raise InvalidParameterError(f"wheel_mass must be > 0, got {self.wheel_mass}")
        if not self.natural_frequency > 0:
            raise InvalidParameterError(f"natural_frequency must be > 0, got {self.natural_frequency}")
        if not self.damping_ratio >= 0:
            raise InvalidParameterError(f"damping_ratio must be >= 0, got {self.damping_ratio}")
        if len(self.mount_position) != 3:
            raise InvalidParameterError("mount_position must be a 3-vector")
        object.__setattr__(self, "mount_position", tuple(float(c) for c in self.mount_position))


@dataclass(frozen=True)
class SplineControlPoints:
    """Origin, extremum and asymptote of a friction curve (slip, normalized force)."""

    origin: tuple[float, float]
    extremum: tuple[float, float]
    asymptote: tuple[float, float]

    def __post_init__(self):
        (s0, _), (se, fe), (sa, fa) = self.origin, self.extremum, self.asymptote
        if not s0 < se < sa:
            raise InvalidParameterError(f"slip breakpoints must satisfy S0 < Se < Sa, got {s0}, {se}, {sa}")
        if fe < fa:
            raise InvalidParameterError(f"extremum force {fe} must be >= asymptote force {fa}")


@dataclass(frozen=True)
class VehicleParams:
    corners: tuple[CornerParams, CornerParams, CornerParams, CornerParams]
    wheelbase: float
    track_width: float
    tire_radius: float
    brake_disk_radius: float
    braking_distance: float
    engine_torque_curve: tuple[tuple[float, float], ...]
    # forward gears first (gear 1 = index 0); the reverse ratio is the last, negative entry
    gear_ratios: tuple[float, ...]
    final_drive: float
    idle_rpm: float
    drivetrain: Drivetrain
    torque_drop: float
    steer_sensitivity: float
    steer_speed_factor: float
    max_steer: float
    v_max: float
    v_rev: float
    drag_max: float
    drag_idle: float
    drag_rev: float
    drag_run: float
    tire_long: SplineControlPoints
    tire_lat: SplineControlPoints
    shift_up_rpm: float
    shift_down_rpm: float
    body_length: float = 4.8
    body_width: float = 1.9
    body_height: float = 1.45
    ride_height: float = 0.5
    throttle_time_constant: float = 0.2
    rpm_time_constant: float = 0.5

    def __post_init__(self):
        if len(self.corners) != 4:
            raise InvalidParameterError(f"expected 4 corners, got {len(self.corners)}")
        for name in ("wheelbase", "track_width", "tire_radius", "brake_disk_radius",
                     "braking_distance", "final_drive", "v_max", "v_rev", "max_steer",
                     "body_length", "body_width", "body_height",
                     "throttle_time_constant", "rpm_time_constant"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.idle_rpm < 0:
            raise InvalidParameterError("idle_rpm must be >= 0")
        if any(r == 0 for r in self.gear_ratios):
            raise InvalidParameterError("gear ratios must be nonzero")
        if len(self.gear_ratios) < 2 or self.gear_ratios[-1] >= 0 or any(r < 0 for r in self.gear_ratios[:-1]):
            raise InvalidParameterError("gear_ratios must list positive forward ratios followed by one negative reverse ratio")
        if not self.shift_down_rpm < self.shift_up_rpm:
            raise InvalidParameterError("shift_down_rpm must be < shift_up_rpm")
        curve = self.engine_torque_curve
        if len(curve) < 1 or any(b[0] <= a[0] for a, b in zip(curve, curve[1:])):
            raise InvalidParameterError("engine_torque_curve RPM breakpoints must be strictly increasing")
        object.__setattr__(self, "drivetrain", Drivetrain(self.drivetrain))
        object.__setattr__(self, "engine_torque_curve", tuple((float(a), float(b)) for a, b in curve))
        object.__setattr__(self, "gear_ratios", tuple(float(r) for r in self.gear_ratios))

    @property
    def forward_gears(self) -> int:
        return len(self.gear_ratios) - 1

    def gear_ratio(self, gear: int) -> float:
        if gear == -1:
            return self.gear_ratios[-1]
        if 1 <= gear <= self.forward_gears:
            return self.gear_ratios[gear - 1]
        raise InvalidParameterError(f"gear {gear} outside ratio table (-1, 1..{self.forward_gears})")

    @property
    def driven_wheels(self) -> tuple[int, ...]:
        return {Drivetrain.FWD: (0, 1), Drivetrain.RWD: (2, 3), Drivetrain.AWD: (0, 1, 2, 3)}[self.drivetrain]


def default_vehicle_params() -> VehicleParams:
    """Stand-in calibration for a mid-size sedan.

    Torque curve and gear table are placeholders (flat 300 N*m over 1000-5000 RPM,
    six forward gears, reverse -4.0, final drive 3.5); torque fades to zero at 6000 RPM.
    """
    front = dict(sprung_mass=480.0, wheel_mass=20.0, natural_frequency=9.0, damping_ratio=0.35)
    rear = dict(sprung_mass=420.0, wheel_mass=20.0, natural_frequency=9.5, damping_ratio=0.35)
    return VehicleParams(
        corners=(
            CornerParams(mount_position=(1.4, 0.8, 0.0), **front),
            CornerParams(mount_position=(1.4, -0.8, 0.0), **front),
            CornerParams(mount_position=(-1.4, 0.8, 0.0), **rear),
            CornerParams(mount_position=(-1.4, -0.8, 0.0), **rear),
        ),
        wheelbase=2.8,
        track_width=1.6,
        tire_radius=0.34,
        brake_disk_radius=0.17,
        braking_distance=40.0,
        engine_torque_curve=((1000.0, 300.0), (5000.0, 300.0), (6000.0, 0.0)),
        gear_ratios=(4.7, 3.1, 2.1, 1.6, 1.2, 1.0, -4.0),
        final_drive=3.5,
        idle_rpm=800.0,
        drivetrain=Drivetrain.AWD,
        torque_drop=0.5,
        steer_sensitivity=0.8,
        steer_speed_factor=-0.4,
        max_steer=0.6,
        v_max=40.0,
        v_rev=5.0,
        drag_max=6000.0,
        drag_idle=300.0,
        drag_rev=3000.0,
        drag_run=400.0,
        tire_long=SplineControlPoints((0.0, 0.0), (0.15, 1.0), (0.6, 0.75)),
        tire_lat=SplineControlPoints((0.0, 0.0), (0.15, 1.0), (0.5, 0.8)),
        shift_up_rpm=4000.0,
        shift_down_rpm=1500.0,
    )


@dataclass(frozen=True, slots=True)
class ControlInput:
    throttle: float = 0.0
    steering: float = 0.0
    brake: float = 0.0
    handbrake: int = 0
    lights: Lights = Lights.OFF
    reverse: bool = False

    def __post_init__(self):
        if not 0.0 <= self.throttle <= 1.0:
            raise InvalidParameterError(f"throttle must be in [0, 1], got {self.throttle}")
        if not 0.0 <= self.brake <= 1.0:
            raise InvalidParameterError(f"brake must be in [0, 1], got {self.brake}")
        if self.handbrake not in (0, 1):
            raise InvalidParameterError(f"handbrake must be 0 or 1, got {self.handbrake}")
        if not math.isfinite(self.steering):
            raise InvalidParameterError("steering command must be finite")
        object.__setattr__(self, "lights", Lights(self.lights))


def _quad(value=0.0):
    return field(default_factory=lambda: (value,) * 4)


@dataclass(slots=True)
class VehicleState:
    """Planar rigid-body pose plus per-corner suspension, wheel and powertrain state.

    ``x, y`` locate the centre of mass on the ground plane; ``v`` is the signed
    forward speed and ``vy`` the lateral speed, both in the body frame.
    ``susp_defl`` is the sprung-corner displacement relative to the wheel.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    v: float = 0.0
    vy: float = 0.0
    yaw_rate: float = 0.0
    wheel_omega: tuple[float, ...] = _quad()
    susp_defl: tuple[float, ...] = _quad()
    susp_rate: tuple[float, ...] = _quad()
    wheel_revs: tuple[float, ...] = _quad()
    engine_rpm: float = 0.0
    gear: int = 1
    steering: float = 0.0
    tau_out: float = 0.0
    throttle_gain: float = 0.0

    @property
    def pose(self) -> np.ndarray:
        return planar_pose(self.x, self.y, self.z, self.yaw)

    @property
    def angular_velocity(self) -> tuple[float, float, float]:
        return (0.0, 0.0, self.yaw_rate)

    @property
    def wheel_rpm(self) -> tuple[float, ...]:
        k = 60.0 / (2.0 * math.pi)
        return tuple(w * k for w in self.wheel_omega)

    @property
    def mean_wheel_rpm(self) -> float:
        return sum(self.wheel_rpm) / 4.0

    def as_dict(self) -> dict:
        return {
            "x": self.x, "y": self.y, "z": self.z, "yaw": self.yaw,
            "v": self.v, "vy": self.vy, "yaw_rate": self.yaw_rate,
            "wheel_omega": list(self.wheel_omega),
            "susp_defl": list(self.susp_defl),
            "susp_rate": list(self.susp_rate),
            "wheel_revs": list(self.wheel_revs),
            "engine_rpm": self.engine_rpm, "gear": self.gear,
            "steering": self.steering, "tau_out": self.tau_out,
            "throttle_gain": self.throttle_gain,
        }
