"""Fixed-timestep integration of the full vehicle.

The body is a planar rigid body (x, y, yaw) carried by four quarter-car
suspensions on flat ground. Each tick composes the sub-models in a fixed
order and advances velocities before positions (semi-implicit Euler).

The longitudinal tire/wheel/body coupling is stiff at low speed, so tire
forces are linearised in slip and solved implicitly for the new wheel speeds
and forward speed; lateral forces are explicit with a slip-angle speed floor.
"""

from __future__ import annotations

import math

from ..errors import SimulationDiverged
from ..geometry import Footprint
from .params import GRAVITY, ControlInput, VehicleParams, VehicleState
from .submodels import (
    ackermann_angles,
    aero_drag,
    aggregate_inertia,
    apply_steering,
    brake_capacity,
    differential_split,
    powertrain_torque,
    smooth_throttle,
    suspension_coefficients,
    suspension_force,
    update_engine_state,
)
from .tire import fit_tire_spline

DEFAULT_DT = 0.01
# denominators of the slip definitions
LONG_SLIP_FLOOR = 0.1
LAT_SLIP_FLOOR = 1.0


def _finite(value: float, submodel: str) -> float:
    if not math.isfinite(value):
        raise SimulationDiverged(submodel, repr(value))
    return value


class VehicleModel:
    """Immutable per-vehicle constants plus the ``step`` integrator."""

    def __init__(self, params: VehicleParams):
        self.params = params
        corners = params.corners
        sprung, com, inertia = aggregate_inertia(corners)
        self.com = (float(com[0]), float(com[1]))
        self.mass = sprung + sum(c.wheel_mass for c in corners)
        self.offsets = tuple((float(c.mount_position[0] - com[0]), float(c.mount_position[1] - com[1])) for c in corners)
        self.yaw_inertia = inertia + sum(c.wheel_mass * (x * x + y * y) for c, (x, y) in zip(corners, self.offsets))
        self.coefficients = tuple(
            suspension_coefficients(c.sprung_mass, c.natural_frequency, c.damping_ratio) for c in corners)
        R = params.tire_radius
        # solid-disk wheels
        self.wheel_inertia = tuple(0.5 * c.wheel_mass * R * R for c in corners)
        # the calibration torque is referenced to the disk radius; rescale to the tire contact
        self.brake_torque_max = tuple(brake_capacity(c, params) * R / params.brake_disk_radius for c in corners)
        self.long_spline = fit_tire_spline(params.tire_long)
        self.lat_spline = fit_tire_spline(params.tire_lat)
        self.driven = params.driven_wheels
        self.half_length = params.body_length / 2.0
        self.half_width = params.body_width / 2.0

    def static_deflection(self, i: int) -> float:
        K, _ = self.coefficients[i]
        return -self.params.corners[i].sprung_mass * GRAVITY / K

    def initial_state(self, x: float = 0.0, y: float = 0.0, yaw: float = 0.0, v: float = 0.0) -> VehicleState:
        """State at rest on its springs (or rolling at ``v`` without slip)."""
        defl = tuple(self.static_deflection(i) for i in range(4))
        omega = v / self.params.tire_radius
        return VehicleState(
            x=x, y=y, z=self.params.ride_height + sum(defl) / 4.0, yaw=yaw, v=v,
            wheel_omega=(omega,) * 4, susp_defl=defl, susp_rate=(0.0,) * 4,
            engine_rpm=self.params.idle_rpm, gear=1,
        )

    def footprint(self, state: VehicleState) -> Footprint:
        """Ground-plane body rectangle; its centre sits at the geometric centre, not the COM."""
        ox, oy = -self.com[0], -self.com[1]
        c, s = math.cos(state.yaw), math.sin(state.yaw)
        return Footprint(state.x + c * ox - s * oy, state.y + s * ox + c * oy, state.yaw,
                         self.half_length, self.half_width)

    def _solve_longitudinal(self, state, wheels, drive, brake, locked, drag, dt):
        """Implicit solve for the forward-speed change, wheel speeds and tire forces."""
        R = self.params.tire_radius
        M = self.mass
        sum_p = sum_q = 0.0
        coeffs = []
        for i, (c, s, vl, b, fy) in enumerate(wheels):
            w = state.wheel_omega[i]
            if locked[i]:
                alpha = beta = sgn = 0.0
                p0, q0 = 0.0, -b
            else:
                J = self.wheel_inertia[i]
                J_eff = J + dt * R * R * b
                free = J * w + dt * drive[i] + dt * R * b * vl
                sgn = math.copysign(1.0, free) if brake[i] > 0.0 else 0.0
                alpha = (J * w + dt * drive[i] - dt * sgn * brake[i]) / J_eff
                beta = dt * R * b / J_eff
                p0, q0 = b * R * alpha, b * (R * beta - 1.0)
            # force on the tire as p + q * dv, with the wheel speed eliminated
            pi = p0 + q0 * vl
            qi = q0 * c
            sum_p += c * pi - s * fy
            sum_q += c * qi
            coeffs.append((pi, qi, alpha, beta, sgn if not locked[i] else 0.0))
        dv = dt * (sum_p + drag + M * state.yaw_rate * state.vy) / (M - dt * sum_q)
        omega = [0.0] * 4
        forces = [0.0] * 4
        for i, (pi, qi, alpha, beta, _) in enumerate(coeffs):
            c, vl = wheels[i][0], wheels[i][2]
            forces[i] = pi + qi * dv
            if not locked[i]:
                omega[i] = alpha + beta * (vl + c * dv)
        directions = [row[4] for row in coeffs]
        return dv, omega, forces, directions

    def step(self, state: VehicleState, control: ControlInput, scene=None, conditions=None,
             dt: float = DEFAULT_DT) -> VehicleState:
        p = self.params
        if not dt > 0:
            raise ValueError("dt must be > 0")
        traction = 1.0 if conditions is None else conditions.traction_scale
        v, vy, r = state.v, state.vy, state.yaw_rate
        M = self.mass
        R = p.tire_radius

        delta = apply_steering(state.steering, control.steering, v, p, dt)
        delta_l, delta_r = ackermann_angles(delta, p.wheelbase, p.track_width)
        rpm_e, gear = update_engine_state(state, p, dt, control.reverse)
        gain = smooth_throttle(state.throttle_gain, control.throttle, dt, p.throttle_time_constant)
        tau_total = _finite(powertrain_torque(control.throttle, rpm_e, gear, p, gain), "powertrain")
        tau_left, tau_right = differential_split(tau_total, delta, p.drivetrain, p.torque_drop)
        drive = [0.0, 0.0, 0.0, 0.0]
        for i in self.driven:
            drive[i] = tau_left if i % 2 == 0 else tau_right
        brake = [cap * control.brake for cap in self.brake_torque_max]
        if control.handbrake:
            brake[2], brake[3] = self.brake_torque_max[2], self.brake_torque_max[3]

        # suspension: wheels ride the flat ground, sprung corners oscillate above them
        loads = [0.0] * 4
        defl = [0.0] * 4
        rate = [0.0] * 4
        for i, corner in enumerate(p.corners):
            Z, Zr = state.susp_defl[i], state.susp_rate[i]
            f_wheel = suspension_force(corner, 0.0, 0.0, Z, Zr, gravity=False, coefficients=self.coefficients[i])
            _finite(f_wheel, "suspension")
            loads[i] = max(corner.wheel_mass * GRAVITY - f_wheel, 0.0) * traction
            Zr = Zr + dt * (-f_wheel - corner.sprung_mass * GRAVITY) / corner.sprung_mass
            rate[i] = Zr
            defl[i] = Z + dt * Zr

        # tires: implicit in wheel speed and forward speed
        long_spline, lat_spline = self.long_spline, self.lat_spline
        steer = (delta_l, delta_r, 0.0, 0.0)
        wheels = []
        for i in range(4):
            xi, yi = self.offsets[i]
            c, s = math.cos(steer[i]), math.sin(steer[i])
            vxw = v - r * yi
            vyw = vy + r * xi
            vl = c * vxw + s * vyw
            vt = -s * vxw + c * vyw
            N = loads[i]
            d = max(abs(vl), LONG_SLIP_FLOOR)
            slip = (state.wheel_omega[i] * R - vl) / d
            # secant slope: force stays proportional to relative slip velocity over the step
            if abs(slip) > 1e-9:
                f, _ = long_spline.evaluate(abs(slip))
                b = N * f / (abs(slip) * d)
            else:
                b = N * long_spline.derivative(0.0) / d
            alpha_slip = math.atan(vt / max(abs(vl), LAT_SLIP_FLOOR))
            if alpha_slip != 0.0:
                fl, _ = lat_spline.evaluate(abs(alpha_slip))
                fy = -math.copysign(fl, alpha_slip) * N
            else:
                fy = 0.0
            wheels.append((c, s, vl, b, fy))
        _finite(sum(w[3] + w[4] for w in wheels), "tire")

        drag = aero_drag(state, p, tau_total)
        limit = M * abs(v) / dt
        if abs(drag) > limit:
            drag = math.copysign(limit, drag)
        _finite(drag, "aero")

        locked = [False] * 4
        for i in range(4):
            b = wheels[i][3]
            J = self.wheel_inertia[i]
            free = (J * state.wheel_omega[i] + dt * drive[i] + dt * R * b * wheels[i][2]) / (J + dt * R * R * b)
            locked[i] = brake[i] > 0.0 and abs(free) * (J + dt * R * R * b) <= dt * brake[i]
        # re-solve while a braked wheel would reverse its spin
        for _ in range(5):
            dv, omega, forces, directions = self._solve_longitudinal(state, wheels, drive, brake, locked, drag, dt)
            flipped = False
            for i in range(4):
                if not locked[i] and brake[i] > 0.0 and omega[i] * directions[i] < 0.0:
                    locked[i] = flipped = True
            if not flipped:
                break
        v_new = v + dv
        _finite(v_new, "integrator")

        fx_sum = fy_sum = moment = 0.0
        for i, (c, s, vl, b, fy) in enumerate(wheels):
            F = forces[i]
            fx = c * F - s * fy
            fyb = s * F + c * fy
            xi, yi = self.offsets[i]
            fx_sum += fx
            fy_sum += fyb
            moment += xi * fyb - yi * fx
        vy_new = vy + dt * (fy_sum / M - r * v)
        r_new = r + dt * moment / self.yaw_inertia
        _finite(v_new + vy_new + r_new, "integrator")

        yaw = state.yaw + r_new * dt
        cy, sy = math.cos(yaw), math.sin(yaw)
        x = state.x + (v_new * cy - vy_new * sy) * dt
        y = state.y + (v_new * sy + vy_new * cy) * dt
        revs = tuple(n + w * dt / (2.0 * math.pi) for n, w in zip(state.wheel_revs, omega))

        new = VehicleState(
            x=x, y=y, z=p.ride_height + sum(defl) / 4.0, yaw=yaw,
            v=v_new, vy=vy_new, yaw_rate=r_new,
            wheel_omega=tuple(omega), susp_defl=tuple(defl), susp_rate=tuple(rate),
            wheel_revs=revs, engine_rpm=rpm_e, gear=gear, steering=delta,
            tau_out=tau_total, throttle_gain=gain,
        )
        if scene is not None and scene.min_gap(self.footprint(new)) <= 0.0:
            # inelastic contact with a static obstacle
            new.v = new.vy = new.yaw_rate = 0.0
            new.wheel_omega = (0.0,) * 4
        return new


def step(model: VehicleModel, state: VehicleState, control: ControlInput, scene=None, conditions=None,
         dt: float = DEFAULT_DT) -> VehicleState:
    return model.step(state, control, scene, conditions, dt)
