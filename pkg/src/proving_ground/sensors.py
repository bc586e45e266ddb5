"""Encoders, INS, pinhole camera geometry and ray-cast LIDAR."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InvalidParameterError
from .geometry import check_rigid, invert_rigid, ray_box, ray_plane, ray_sphere, transform

# -- noise ------------------------------------------------------------------------


@dataclass
class NoiseModel:
    """Zero-mean Gaussian noise plus a constant bias, per named channel.

    ``std`` and ``bias`` map channel names to values; a ``"*"`` entry is the
    fallback for channels not listed. With ``compensate`` the bias is removed
    again, leaving only the random part.
    """

    std: dict = field(default_factory=dict)
    bias: dict = field(default_factory=dict)
    enabled: bool = True
    seed: int = 0
    compensate: bool = False
    _rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for ch, s in self.std.items():
            if not s >= 0:
                raise InvalidParameterError(f"noise std for {ch!r} must be >= 0, got {s}")
        self._rng = np.random.default_rng(self.seed)

    def _lookup(self, table: dict, channel: str) -> float:
        return float(table.get(channel, table.get("*", 0.0)))

    def apply(self, channel: str, values):
        values = np.asarray(values, dtype=float)
        if not self.enabled:
            return values
        sigma = self._lookup(self.std, channel)
        bias = 0.0 if self.compensate else self._lookup(self.bias, channel)
        noise = self._rng.normal(0.0, sigma, size=values.shape) if sigma > 0 else 0.0
        return values + bias + noise


def _apply_noise(noise: NoiseModel | None, channel: str, values):
    return np.asarray(values, dtype=float) if noise is None else noise.apply(channel, values)


# -- encoders ---------------------------------------------------------------------


@dataclass(frozen=True)
class EncoderConfig:
    ppr: int
    cgr: float

    def __post_init__(self):
        if not (isinstance(self.ppr, (int, np.integer)) and self.ppr >= 1):
            raise InvalidParameterError(f"ppr must be an integer >= 1, got {self.ppr!r}")
        if not self.cgr > 0:
            raise InvalidParameterError(f"cgr must be > 0, got {self.cgr}")


def encoder_read(n_rev: float, cfg: EncoderConfig) -> int:
    # the small epsilon keeps exact products such as 4800.0 from flooring to 4799
    return math.floor(cfg.ppr * cfg.cgr * n_rev + 1e-9)


# -- INS --------------------------------------------------------------------------


@dataclass(frozen=True)
class InsReading:
    position: np.ndarray
    orientation: np.ndarray  # quaternion, scalar-last (x, y, z, w)
    velocity: np.ndarray
    angular_rate: np.ndarray


def ins_read(state, noise: NoiseModel | None = None, previous_pose: np.ndarray | None = None,
             dt: float = 0.01) -> InsReading:
    """Decompose the vehicle pose into GNSS/IMU-style outputs.

    ``state`` is a ``VehicleState`` or a bare 4x4 pose. When ``previous_pose``
    is given, velocity and angular rate are finite differences over ``dt``;
    otherwise they come from the state (zero for a bare pose).
    """
    if isinstance(state, np.ndarray):
        T = state
        vel = np.zeros(3)
        rate = np.zeros(3)
    else:
        T = state.pose
        c, s = math.cos(state.yaw), math.sin(state.yaw)
        vel = np.array([state.v * c - state.vy * s, state.v * s + state.vy * c, 0.0])
        rate = np.array(state.angular_velocity, dtype=float)
    check_rigid(T)
    R = T[:3, :3]
    t = T[:3, 3].copy()
    if previous_pose is not None:
        check_rigid(previous_pose)
        if not dt > 0:
            raise InvalidParameterError("dt must be > 0")
        vel = (t - previous_pose[:3, 3]) / dt
        rate = Rotation.from_matrix(previous_pose[:3, :3].T @ R).as_rotvec() / dt
    quat = Rotation.from_matrix(R).as_quat()
    if noise is not None and noise.enabled:
        t = _apply_noise(noise, "position", t)
        perturb = _apply_noise(noise, "orientation", np.zeros(3))
        quat = (Rotation.from_rotvec(perturb) * Rotation.from_quat(quat)).as_quat()
        vel = _apply_noise(noise, "velocity", vel)
        rate = _apply_noise(noise, "angular_rate", rate)
    return InsReading(t, quat, np.asarray(vel, dtype=float), np.asarray(rate, dtype=float))


# -- camera -----------------------------------------------------------------------

# vehicle-frame directions of the camera axes: x right, y up, z backward (the camera looks down -z)
CAMERA_AXES = np.array([[0.0, 0.0, -1.0],
                        [-1.0, 0.0, 0.0],
                        [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class CameraIntrinsics:
    near: float = 0.1
    far: float = 500.0
    left: float = -0.05
    right: float = 0.05
    top: float = 0.0375
    bottom: float = -0.0375
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise InvalidParameterError(f"need 0 < near < far, got {self.near}, {self.far}")
        if not self.left < self.right:
            raise InvalidParameterError("need left < right")
        if not self.bottom < self.top:
            raise InvalidParameterError("need bottom < top")
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError("image size must be positive")

    @property
    def vertical_scale(self) -> float:
        """Fraction of image height covered by a 1 m tall object at 1 m depth."""
        return self.near / (self.top - self.bottom)


def camera_mount(x: float, y: float, z: float) -> np.ndarray:
    """Vehicle-to-camera transform for a forward-looking camera at the given offset."""
    return transform(CAMERA_AXES, (x, y, z))


def camera_view_matrix(camera_pose: np.ndarray) -> np.ndarray:
    check_rigid(camera_pose)
    return invert_rigid(camera_pose)


def camera_projection_matrix(intr: CameraIntrinsics) -> np.ndarray:
    N, F = intr.near, intr.far
    L, R, T, B = intr.left, intr.right, intr.top, intr.bottom
    return np.array([
        [2 * N / (R - L), 0.0, (R + L) / (R - L), 0.0],
        [0.0, 2 * N / (T - B), (T + B) / (T - B), 0.0],
        [0.0, 0.0, -(F + N) / (F - N), -2 * F * N / (F - N)],
        [0.0, 0.0, -1.0, 0.0],
    ])


NDC_TOLERANCE = 1e-9


def project_point(world_point, V: np.ndarray, P: np.ndarray, width: int, height: int):
    """Pixel coordinates (origin top-left) and eye-space depth, or ``None`` when culled."""
    p = np.append(np.asarray(world_point, dtype=float), 1.0)
    eye = V @ p
    clip = P @ eye
    w = clip[3]
    if not w > 0.0:
        return None
    ndc = clip[:3] / w
    if np.any(np.abs(ndc) > 1.0 + NDC_TOLERANCE):
        return None
    u = (ndc[0] + 1.0) * 0.5 * width
    v = (1.0 - ndc[1]) * 0.5 * height
    return float(u), float(v), float(-eye[2])


# -- LIDAR ------------------------------------------------------------------------


def ray_direction(theta: float, phi: float) -> np.ndarray:
    cp = math.cos(phi)
    return np.array([math.cos(theta) * cp, math.sin(theta) * cp, -math.sin(phi)])


def _angle_grid(lo: float, hi: float, res: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / res + 1e-9)) + 1
    return lo + res * np.arange(max(n, 0))


@dataclass(frozen=True)
class LidarConfig:
    mount: np.ndarray = field(default_factory=lambda: transform(np.eye(3), (0.5, 0.0, 1.4)))
    r_min: float = 0.5
    r_max: float = 100.0
    theta_min: float = -math.pi / 4
    theta_max: float = math.pi / 4
    theta_res: float = math.radians(1.0)
    phi_min: float = math.radians(-2.0)
    phi_max: float = math.radians(12.0)
    phi_res: float = math.radians(2.0)
    update_rate: float = 10.0

    def __post_init__(self):
        if not 0 <= self.r_min < self.r_max:
            raise InvalidParameterError(f"need 0 <= r_min < r_max, got {self.r_min}, {self.r_max}")
        if not (self.theta_res > 0 and self.phi_res > 0):
            raise InvalidParameterError("angular resolutions must be > 0")
        if not self.update_rate > 0:
            raise InvalidParameterError("update_rate must be > 0")
        check_rigid(self.mount)

    @cached_property
    def directions(self) -> np.ndarray:
        """Unit rays in the sensor frame, theta-major."""
        th = _angle_grid(self.theta_min, self.theta_max, self.theta_res)
        ph = _angle_grid(self.phi_min, self.phi_max, self.phi_res)
        T, Ph = np.meshgrid(th, ph, indexing="ij")
        T, Ph = T.ravel(), Ph.ravel()
        cp = np.cos(Ph)
        return np.stack([np.cos(T) * cp, np.sin(T) * cp, -np.sin(Ph)], axis=1)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3) in the sensor frame
    timestamp: float = 0.0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def ranges(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)


def _cast(origin: np.ndarray, dirs: np.ndarray, obstacles) -> np.ndarray:
    best = np.full(len(dirs), np.inf)
    for o in obstacles:
        if o.shape == "plane":
            T = o.pose
            t = ray_plane(origin, dirs, T[:3, 3], T[:3, 2])
        elif o.shape == "sphere":
            t = ray_sphere(origin, dirs, np.asarray(o.position), o.dimensions[0])
        else:
            t = ray_box(origin, dirs, o.pose, np.asarray(o.dimensions) / 2.0)
        np.minimum(best, t, out=best)
    return best


def lidar_scan(state, cfg: LidarConfig, scene, noise: NoiseModel | None = None,
               workers: int = 1, timestamp: float | None = None) -> PointCloud:
    """Nearest-hit ray cast over the configured angle grid.

    ``state`` is a ``VehicleState`` or a 4x4 vehicle pose. Rays may be split
    over ``workers`` threads; the output order is theta-major regardless.
    """
    pose = state if isinstance(state, np.ndarray) else state.pose
    if timestamp is None:
        timestamp = 0.0
    if scene is None or not scene.obstacles:
        return PointCloud(np.zeros((0, 3)), timestamp)
    T_wl = pose @ cfg.mount
    R, origin = T_wl[:3, :3], T_wl[:3, 3]
    local = cfg.directions
    world = local @ R.T
    obstacles = scene.obstacles
    if workers > 1 and len(world) > workers:
        chunks = np.array_split(np.arange(len(world)), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda idx: _cast(origin, world[idx], obstacles), chunks))
        ranges = np.concatenate(parts)
    else:
        ranges = _cast(origin, world, obstacles)
    hit = np.isfinite(ranges)
    ranges = np.where(hit, _apply_noise(noise, "range", np.where(hit, ranges, 0.0)), np.inf)
    keep = (ranges >= cfg.r_min) & (ranges <= cfg.r_max)
    return PointCloud(local[keep] * ranges[keep, None], timestamp)
