"""Systems under test: the reference reactive AEB stack and an external-process adapter.

The reference stack has three stages run once per tick: synthetic perception
(a parametric stand-in for a neural detector), a latching finite-state planner
that raises the emergency-brake trigger, and a drive-by-wire controller.
"""

from __future__ import annotations

import json
import subprocess
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dynamics.params import ControlInput, Lights
from .errors import InvalidParameterError, ProvingGroundError
from .sensors import project_point

# -- perception -------------------------------------------------------------------


@dataclass(frozen=True)
class DetectorProfile:
    name: str
    max_detect_range: float
    confidence_slope: float
    miss_rate_base: float
    min_bbox_frac: float
    latency_ticks: int = 0

    def __post_init__(self):
        if not self.max_detect_range > 0:
            raise InvalidParameterError(f"{self.name}: max_detect_range must be > 0")
        if not 0.0 <= self.miss_rate_base < 1.0:
            raise InvalidParameterError(f"{self.name}: miss_rate_base must be in [0, 1)")
        if not self.confidence_slope > 0:
            raise InvalidParameterError(f"{self.name}: confidence_slope must be > 0")
        if not 0.0 <= self.min_bbox_frac <= 1.0:
            raise InvalidParameterError(f"{self.name}: min_bbox_frac must be in [0, 1]")
        if self.latency_ticks < 0:
            raise InvalidParameterError(f"{self.name}: latency_ticks must be >= 0")


# Reliability order det-A > det-C > det-D > det-B. Confidence falls off with
# range relative to the effective range, so a shallow slope (det-B) makes a
# detector sensitive to anything that shortens the effective range, such as fog.
DEFAULT_PROFILES = {
    "det-A": DetectorProfile("det-A", 120.0, 1.0, 0.02, 0.03, 1),
    "det-B": DetectorProfile("det-B", 120.0, 0.35, 0.30, 0.07, 5),
    "det-C": DetectorProfile("det-C", 110.0, 0.9, 0.05, 0.035, 2),
    "det-D": DetectorProfile("det-D", 90.0, 0.75, 0.15, 0.05, 3),
}


@dataclass(frozen=True)
class Detection:
    class_tag: str
    confidence: float
    bbox_height_frac: float
    range: float

    def as_dict(self) -> dict:
        return {"class": self.class_tag, "confidence": self.confidence,
                "bbox_height_frac": self.bbox_height_frac, "range": self.range}


@dataclass(frozen=True)
class ObstacleObservation:
    """Ground truth handed to the synthetic detector for one visible obstacle."""

    class_tag: str
    range: float
    height: float


def light_boost(lights, ambient_light: float, fog_present: bool = False) -> float:
    lights = Lights(lights)
    if lights is Lights.HIGH_BEAM:
        return 1.3
    if lights is Lights.LOW_BEAM:
        return 1.1
    if lights is Lights.FOG:
        return 1.5 if fog_present else 0.9
    return 0.7 if ambient_light < 0.5 else 1.0


def effective_range(profile: DetectorProfile, visibility: float, boost: float) -> float:
    return min(profile.max_detect_range, visibility * boost)


def adjusted_miss_rate(profile: DetectorProfile, ambient_light: float, boost: float) -> float:
    """Miss probability grows toward halfway to certain as the scene gets darker."""
    illumination = min(1.0, ambient_light * boost)
    base = profile.miss_rate_base
    return base + (1.0 - base) * 0.5 * (1.0 - illumination)


def synth_detect(observations, conditions, ambient_light: float, lights, profile: DetectorProfile,
                 rng: np.random.Generator, k_proj: float = 4.0 / 3.0) -> list[Detection]:
    """One tick of synthetic detection.

    Exactly one uniform draw is taken per observation, hit or miss, so two
    profiles sharing a seed see the same random sequence.
    """
    if isinstance(observations, ObstacleObservation):
        observations = [observations]
    boost = light_boost(lights, ambient_light, conditions.fog_present)
    r_eff = effective_range(profile, conditions.visibility, boost)
    miss = adjusted_miss_rate(profile, ambient_light, boost)
    out = []
    for obs in observations:
        u = rng.random()
        if obs.range > r_eff or u < miss:
            continue
        confidence = min(max(1.0 - obs.range / (profile.confidence_slope * r_eff), 0.0), 1.0)
        bbox = min(max(obs.height * k_proj / max(obs.range, 1e-9), 0.0), 1.0)
        if bbox < profile.min_bbox_frac or bbox <= 0.0:
            continue
        out.append(Detection(obs.class_tag, confidence, bbox, obs.range))
    return out


# -- planning ---------------------------------------------------------------------

CRUISE = "CRUISE"
BRAKE = "BRAKE"


@dataclass
class AebPlannerConfig:
    trigger_classes: frozenset = frozenset({"car"})
    min_confidence: float = 0.5
    min_bbox_frac: float = 0.04
    latch: bool = True
    state: str = CRUISE

    def __post_init__(self):
        self.trigger_classes = frozenset(self.trigger_classes)
        if not 0.0 <= self.min_confidence <= 1.0:
            raise InvalidParameterError("min_confidence must be in [0, 1]")
        if not 0.0 < self.min_bbox_frac <= 1.0:
            raise InvalidParameterError("min_bbox_frac must be in (0, 1]")
        if self.state not in (CRUISE, BRAKE):
            raise InvalidParameterError(f"planner state must be CRUISE or BRAKE, got {self.state!r}")


def aeb_plan(detections, cfg: AebPlannerConfig) -> int:
    """Evaluate the trigger and advance ``cfg.state`` in place."""
    hit = any(d.class_tag in cfg.trigger_classes
              and d.confidence >= cfg.min_confidence
              and d.bbox_height_frac >= cfg.min_bbox_frac
              for d in detections)
    if hit:
        cfg.state = BRAKE
        return 1
    if cfg.state == BRAKE and cfg.latch:
        return 1
    cfg.state = CRUISE
    return 0


# -- control ----------------------------------------------------------------------

DEFAULT_KP = 0.2


def drive_controller(trigger: int, state, target_speed: float, kp: float = DEFAULT_KP,
                     lights=Lights.OFF) -> ControlInput:
    if not target_speed > 0:
        raise InvalidParameterError("target_speed must be > 0")
    if trigger:
        return ControlInput(throttle=0.0, brake=1.0, steering=0.0, lights=lights)
    v = state if isinstance(state, (int, float)) else state.v
    throttle = min(max(kp * (target_speed - v), 0.0), 1.0)
    brake = min(max(kp * (v - target_speed), 0.0), 1.0)
    return ControlInput(throttle=throttle, brake=brake, steering=0.0, lights=lights)


def lighting_policy(ambient_light: float, fog_present: bool) -> Lights:
    if fog_present:
        return Lights.FOG
    if ambient_light < 0.15:
        return Lights.HIGH_BEAM
    if ambient_light < 0.5:
        return Lights.LOW_BEAM
    return Lights.OFF


# -- SUT interface ----------------------------------------------------------------


@dataclass
class SensorFrame:
    """Everything a SUT sees on one tick."""

    t: float
    speed: float
    observations: list
    conditions: object
    lidar_points: int = 0
    lidar_min_range: float | None = None

    def as_dict(self) -> dict:
        return {
            "t": self.t, "speed": self.speed,
            "observations": [{"class": o.class_tag, "range": o.range, "height": o.height}
                             for o in self.observations],
            "ambient_light": self.conditions.ambient_light,
            "visibility": self.conditions.visibility,
            "fog_present": self.conditions.fog_present,
            "lidar_points": self.lidar_points, "lidar_min_range": self.lidar_min_range,
        }


@dataclass
class SutOutput:
    control: ControlInput
    trigger: int
    detections: list = field(default_factory=list)


class ReferenceAeb:
    """perceive -> plan -> act, one call per tick."""

    def __init__(self, profile: DetectorProfile, seed: int, target_speed: float,
                 planner: AebPlannerConfig | None = None, kp: float = DEFAULT_KP,
                 k_proj: float = 4.0 / 3.0):
        self.profile = profile
        self.rng = np.random.default_rng(seed)
        self.target_speed = target_speed
        self.planner = planner if planner is not None else AebPlannerConfig()
        self.kp = kp
        self.k_proj = k_proj
        self._pipeline = deque([[]] * profile.latency_ticks)

    def perceive(self, frame: SensorFrame, lights) -> list[Detection]:
        fresh = synth_detect(frame.observations, frame.conditions, frame.conditions.ambient_light,
                             lights, self.profile, self.rng, self.k_proj)
        if not self.profile.latency_ticks:
            return fresh
        self._pipeline.append(fresh)
        return self._pipeline.popleft()

    def plan(self, detections) -> int:
        return aeb_plan(detections, self.planner)

    def act(self, trigger: int, speed: float, lights) -> ControlInput:
        return drive_controller(trigger, speed, self.target_speed, self.kp, lights)

    def __call__(self, frame: SensorFrame) -> SutOutput:
        lights = lighting_policy(frame.conditions.ambient_light, frame.conditions.fog_present)
        detections = self.perceive(frame, lights)
        trigger = self.plan(detections)
        return SutOutput(self.act(trigger, frame.speed, lights), trigger, detections)

    def close(self):
        pass


class ExternalSut:
    """Adapter for a SUT running as a child process.

    Each tick one JSON sensor record is written to the child's stdin; the child
    answers with one JSON line ``{"throttle", "brake", "steering", "lights",
    "aeb_trigger"}`` on stdout.
    """

    def __init__(self, command: list[str], seed: int, target_speed: float):
        self.proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, bufsize=1)
        self._send({"type": "hello", "seed": seed, "target_speed": target_speed})

    def _send(self, record: dict):
        self.proc.stdin.write(json.dumps(record, sort_keys=True) + "\n")
        self.proc.stdin.flush()

    def __call__(self, frame: SensorFrame) -> SutOutput:
        self._send({"type": "sensors", **frame.as_dict()})
        line = self.proc.stdout.readline()
        if not line:
            raise ProvingGroundError(f"external SUT exited with code {self.proc.poll()}")
        reply = json.loads(line)
        control = ControlInput(throttle=float(reply.get("throttle", 0.0)), brake=float(reply.get("brake", 0.0)),
                               steering=float(reply.get("steering", 0.0)),
                               lights=reply.get("lights", Lights.OFF.value))
        return SutOutput(control, int(reply.get("aeb_trigger", 0)), [])

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


def observe_obstacles(camera_pose: np.ndarray, scene, V: np.ndarray, P: np.ndarray, width: int, height: int,
                      class_map: dict | None = None) -> list[ObstacleObservation]:
    """Ground-truth range and height of each solid obstacle whose centre projects into the image."""
    class_map = class_map or {"stalled_vehicle": "car"}
    cam = camera_pose[:3, 3]
    out = []
    for o in scene.solids:
        if project_point(o.position, V, P, width, height) is None:
            continue
        if o.shape == "sphere":
            rng_ = max(float(np.linalg.norm(np.asarray(o.position) - cam)) - o.dimensions[0], 0.0)
        else:
            # distance from the camera to the closest point of the oriented box
            T = o.pose
            local = T[:3, :3].T @ (cam - T[:3, 3])
            half = np.asarray(o.dimensions) / 2.0
            rng_ = float(np.linalg.norm(np.maximum(np.abs(local) - half, 0.0)))
        out.append(ObstacleObservation(class_map.get(o.tag, o.tag or "object"), rng_, o.height))
    return out
