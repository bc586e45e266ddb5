"""Rigid transforms, planar footprint distances, and analytic ray casting.

Frames are right-handed with +x forward, +y left, +z up.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import InvalidStateError


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def transform(rotation: np.ndarray, translation) -> np.ndarray:
    """Assemble a 4x4 homogeneous transform."""
    T = np.eye(4)
    T[:3, :3] = rotation
    T[:3, 3] = translation
    return T


def planar_pose(x: float, y: float, z: float, yaw: float) -> np.ndarray:
    return transform(rot_z(yaw), (x, y, z))


def check_rigid(T: np.ndarray, tol: float = 1e-9) -> None:
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 transform, got shape {T.shape}")
    R = T[:3, :3]
    err = np.linalg.norm(R.T @ R - np.eye(3))
    if not err < tol or np.linalg.det(R) < 0:
        raise InvalidStateError(f"rotation block is not orthonormal (|R^T R - I| = {err:.3g})")
    if not np.allclose(T[3], (0.0, 0.0, 0.0, 1.0)):
        raise InvalidStateError("bottom row of transform must be [0, 0, 0, 1]")


def invert_rigid(T: np.ndarray) -> np.ndarray:
    """Closed-form inverse of an SE(3) matrix."""
    R = T[:3, :3]
    t = T[:3, 3]
    Ti = np.eye(4)
    Ti[:3, :3] = R.T
    Ti[:3, 3] = -R.T @ t
    return Ti


def yaw_of(T: np.ndarray) -> float:
    return math.atan2(T[1, 0], T[0, 0])


# -- planar footprints -------------------------------------------------------


class Footprint(NamedTuple):
    """Oriented rectangle on the ground plane."""

    cx: float
    cy: float
    yaw: float
    half_length: float
    half_width: float

    def corners(self) -> list[tuple[float, float]]:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out = []
        for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
            lx, ly = sx * self.half_length, sy * self.half_width
            out.append((self.cx + c * lx - s * ly, self.cy + s * lx + c * ly))
        return out


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = 0.0 if t < 0.0 else 1.0 if t > 1.0 else t
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _separated(a: list, b: list) -> bool:
    # separating-axis test over the edge normals of both rectangles
    for poly in (a, b):
        for i in range(4):
            x0, y0 = poly[i]
            x1, y1 = poly[(i + 1) % 4]
            nx, ny = y0 - y1, x1 - x0
            pa = [nx * x + ny * y for x, y in a]
            pb = [nx * x + ny * y for x, y in b]
            if max(pa) < min(pb) or max(pb) < min(pa):
                return True
    return False


def footprint_distance(a: Footprint, b: Footprint) -> float:
    """Closest-point gap between two oriented rectangles (0 when they touch or overlap)."""
    if a.yaw == 0.0 and b.yaw == 0.0:
        gx = abs(a.cx - b.cx) - (a.half_length + b.half_length)
        gy = abs(a.cy - b.cy) - (a.half_width + b.half_width)
        if gx <= 0.0 and gy <= 0.0:
            return 0.0
        return math.hypot(max(gx, 0.0), max(gy, 0.0))
    ca, cb = a.corners(), b.corners()
    if not _separated(ca, cb):
        return 0.0
    best = math.inf
    for p, q in ((ca, cb), (cb, ca)):
        for px, py in p:
            for i in range(4):
                ax, ay = q[i]
                bx, by = q[(i + 1) % 4]
                best = min(best, _point_segment_distance(px, py, ax, ay, bx, by))
    return best


def footprint_circle_distance(a: Footprint, cx: float, cy: float, radius: float) -> float:
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    dx, dy = cx - a.cx, cy - a.cy
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    qx = max(abs(lx) - a.half_length, 0.0)
    qy = max(abs(ly) - a.half_width, 0.0)
    return max(math.hypot(qx, qy) - radius, 0.0)


# -- ray casting (vectorised over rays) ---------------------------------------


def ray_plane(origin: np.ndarray, dirs: np.ndarray, point: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Distance along each unit ray to an infinite plane; inf on miss."""
    denom = dirs @ normal
    num = float(normal @ (point - origin))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    return np.where((np.abs(denom) > 1e-12) & (t > 0.0), t, np.inf)


def ray_sphere(origin: np.ndarray, dirs: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    oc = origin - center
    b = dirs @ oc
    c = float(oc @ oc) - radius * radius
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > 0.0, t0, t1)
    return np.where((disc >= 0.0) & (t > 0.0), t, np.inf)


def ray_box(origin: np.ndarray, dirs: np.ndarray, box_T: np.ndarray, half_extents: np.ndarray) -> np.ndarray:
    """Slab intersection with an oriented box given its world pose and half extents."""
    R = box_T[:3, :3]
    o = R.T @ (origin - box_T[:3, 3])
    d = dirs @ R
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half_extents - o) * inv
        t2 = (half_extents - o) * inv
    # rays parallel to a slab: inside -> unbounded, outside -> miss
    parallel = d == 0.0
    inside = np.abs(o) <= half_extents
    t1 = np.where(parallel, np.where(inside, -np.inf, np.inf), t1)
    t2 = np.where(parallel, np.where(inside, np.inf, -np.inf), t2)
    tnear = np.max(np.minimum(t1, t2), axis=1)
    tfar = np.min(np.maximum(t1, t2), axis=1)
    t = np.where(tnear > 0.0, tnear, tfar)
    return np.where((tnear <= tfar) & (t > 0.0), t, np.inf)
