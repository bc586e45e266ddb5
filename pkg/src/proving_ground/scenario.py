"""Static scenes, time-of-day/weather conditions, and test-matrix expansion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConfigError, InvalidParameterError
from .geometry import Footprint, footprint_circle_distance, footprint_distance, transform

TIMES_OF_DAY = ("5am", "7am", "9am", "11am", "1pm", "3pm", "5pm", "7pm")
WEATHERS = ("clear", "cloudy", "light_fog", "heavy_fog", "light_rain", "heavy_rain", "light_snow", "heavy_snow")

# returned by distance queries when a scene has no obstacles
NO_OBSTACLE_DISTANCE = 1.0e6


@dataclass(frozen=True)
class ConditionTables:
    """Lookup tables behind ``derive_conditions``; every entry may be overridden from config."""

    sun_light: dict = field(default_factory=lambda: {
        "5am": 0.05, "7am": 0.3, "9am": 0.7, "11am": 0.95,
        "1pm": 1.0, "3pm": 0.9, "5pm": 0.6, "7pm": 0.2})
    attenuation: dict = field(default_factory=lambda: {
        "clear": 1.0, "cloudy": 0.7, "light_fog": 0.5, "heavy_fog": 0.5,
        "light_rain": 0.6, "heavy_rain": 0.6, "light_snow": 0.65, "heavy_snow": 0.65})
    visibility: dict = field(default_factory=lambda: {
        "clear": 10000.0, "cloudy": 8000.0, "light_fog": 200.0, "heavy_fog": 50.0,
        "light_rain": 1000.0, "heavy_rain": 300.0, "light_snow": 800.0, "heavy_snow": 250.0})
    traction: dict = field(default_factory=lambda: {
        "clear": 1.0, "cloudy": 1.0, "light_fog": 1.0, "heavy_fog": 1.0,
        "light_rain": 0.8, "heavy_rain": 0.6, "light_snow": 0.55, "heavy_snow": 0.4})
    fog: frozenset = frozenset({"light_fog", "heavy_fog", "heavy_rain", "heavy_snow"})

    def with_overrides(self, overrides: dict | None) -> "ConditionTables":
        if not overrides:
            return self
        kwargs = {}
        for name in ("sun_light", "attenuation", "visibility", "traction"):
            table = dict(getattr(self, name))
            table.update(overrides.get(name, {}))
            kwargs[name] = table
        kwargs["fog"] = frozenset(overrides.get("fog", self.fog))
        return ConditionTables(**kwargs)


DEFAULT_TABLES = ConditionTables()


@dataclass(frozen=True)
class Conditions:
    time_of_day: str
    weather: str
    ambient_light: float
    visibility: float
    traction_scale: float
    fog_present: bool

    def as_dict(self) -> dict:
        return {
            "time_of_day": self.time_of_day, "weather": self.weather,
            "ambient_light": self.ambient_light, "visibility": self.visibility,
            "traction_scale": self.traction_scale, "fog_present": self.fog_present,
        }


def derive_conditions(time_of_day: str, weather: str, tables: ConditionTables = DEFAULT_TABLES) -> Conditions:
    if time_of_day not in tables.sun_light:
        raise ConfigError(f"unknown time of day {time_of_day!r}; expected one of {sorted(tables.sun_light)}")
    if weather not in tables.visibility:
        raise ConfigError(f"unknown weather {weather!r}; expected one of {sorted(tables.visibility)}")
    traction = tables.traction[weather]
    if not 0.0 < traction <= 1.0:
        raise ConfigError(f"traction for {weather!r} must be in (0, 1], got {traction}")
    light = tables.sun_light[time_of_day] * tables.attenuation[weather]
    return Conditions(
        time_of_day=time_of_day,
        weather=weather,
        ambient_light=min(max(light, 0.0), 1.0),
        visibility=float(tables.visibility[weather]),
        traction_scale=float(traction),
        fog_present=weather in tables.fog,
    )


# -- scene -----------------------------------------------------------------------

SHAPES = ("box", "sphere", "plane")


@dataclass(frozen=True)
class Obstacle:
    """A static primitive. ``dimensions`` is (L, W, H) for a box, (radius,) for a sphere, () for a plane."""

    shape: str
    position: tuple[float, float, float]
    dimensions: tuple[float, ...] = ()
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)  # roll, pitch, yaw in rad
    tag: str = ""

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidParameterError(f"unknown shape {self.shape!r}")
        need = {"box": 3, "sphere": 1, "plane": 0}[self.shape]
        if len(self.dimensions) != need:
            raise InvalidParameterError(f"{self.shape} needs {need} dimensions, got {self.dimensions}")
        if any(not d > 0 for d in self.dimensions):
            raise InvalidParameterError(f"obstacle dimensions must be > 0, got {self.dimensions}")
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "dimensions", tuple(float(c) for c in self.dimensions))
        object.__setattr__(self, "rotation", tuple(float(c) for c in self.rotation))

    @cached_property
    def pose(self) -> np.ndarray:
        R = Rotation.from_euler("xyz", self.rotation).as_matrix()
        return transform(R, self.position)

    @property
    def yaw(self) -> float:
        return self.rotation[2]

    @property
    def height(self) -> float:
        if self.shape == "box":
            return self.dimensions[2]
        if self.shape == "sphere":
            return 2.0 * self.dimensions[0]
        return 0.0

    def footprint(self) -> Footprint:
        L, W, _ = self.dimensions
        return Footprint(self.position[0], self.position[1], self.yaw, L / 2.0, W / 2.0)

    def as_dict(self) -> dict:
        return {"shape": self.shape, "position": list(self.position), "dimensions": list(self.dimensions),
                "rotation": list(self.rotation), "tag": self.tag}

    @classmethod
    def from_dict(cls, d: dict) -> "Obstacle":
        return cls(shape=d["shape"], position=tuple(d["position"]), dimensions=tuple(d.get("dimensions", ())),
                   rotation=tuple(d.get("rotation", (0.0, 0.0, 0.0))), tag=d.get("tag", ""))


def ground_plane() -> Obstacle:
    return Obstacle("plane", (0.0, 0.0, 0.0), tag="ground")


@dataclass(frozen=True)
class Lane:
    start: tuple[float, float]
    heading: float
    length: float
    width: float
    target_speed: float

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.target_speed > 0):
            raise InvalidParameterError("lane length, width and target_speed must be > 0")


@dataclass(frozen=True)
class Scene:
    name: str
    obstacles: tuple[Obstacle, ...]
    lane: Lane
    spawn: tuple[float, float, float]  # x, y, yaw

    def __post_init__(self):
        planes = [o for o in self.obstacles if o.shape == "plane" and o.tag == "ground"]
        if len(planes) != 1:
            raise InvalidParameterError(f"scene {self.name!r} must contain exactly one ground plane, found {len(planes)}")
        # cached solids for distance queries
        solids = []
        for o in self.obstacles:
            if o.shape == "box":
                solids.append((o, o.footprint(), None))
            elif o.shape == "sphere":
                solids.append((o, None, (o.position[0], o.position[1], o.dimensions[0])))
        object.__setattr__(self, "_solids", tuple(solids))

    @property
    def solids(self) -> tuple[Obstacle, ...]:
        """Obstacles that can be collided with (boxes and spheres)."""
        return tuple(s[0] for s in self._solids)

    def gaps(self, fp: Footprint) -> list[float]:
        out = []
        for _, box, sphere in self._solids:
            if box is not None:
                out.append(footprint_distance(fp, box))
            else:
                out.append(footprint_circle_distance(fp, *sphere))
        return out

    def min_gap(self, fp: Footprint) -> float:
        gaps = self.gaps(fp)
        return min(gaps) if gaps else NO_OBSTACLE_DISTANCE

    def as_dict(self) -> dict:
        lane = self.lane
        return {
            "name": self.name,
            "lane": {"start": list(lane.start), "heading": lane.heading, "length": lane.length,
                     "width": lane.width, "target_speed": lane.target_speed},
            "spawn": list(self.spawn),
            "obstacles": [o.as_dict() for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        lane = d["lane"]
        return cls(
            name=d["name"],
            obstacles=tuple(Obstacle.from_dict(o) for o in d["obstacles"]),
            lane=Lane(start=tuple(lane["start"]), heading=float(lane["heading"]), length=float(lane["length"]),
                      width=float(lane["width"]), target_speed=float(lane["target_speed"])),
            spawn=tuple(float(c) for c in d["spawn"]),
        )


def _aeb_jumpscare() -> Scene:
    return Scene(
        name="aeb_jumpscare",
        obstacles=(
            ground_plane(),
            Obstacle("box", (300.0, 0.0, 0.75), (4.5, 1.8, 1.5), tag="stalled_vehicle"),
        ),
        lane=Lane(start=(0.0, 0.0), heading=0.0, length=500.0, width=3.6, target_speed=15.0),
        spawn=(0.0, 0.0, 0.0),
    )


SCENES = {"aeb_jumpscare": _aeb_jumpscare}


def build_scene(name: str) -> Scene:
    if not name:
        raise ConfigError("scene name must not be empty")
    try:
        return SCENES[name]()
    except KeyError:
        raise ConfigError(f"unknown scene {name!r}; known scenes: {sorted(SCENES)}") from None


# -- test matrix -------------------------------------------------------------------


@dataclass(frozen=True)
class TestMatrix:
    __test__ = False

    sut_variants: tuple[str, ...]
    times: tuple[str, ...]
    weathers: tuple[str, ...]
    batch_size: int = 32
    base_seed: int = 0

    def __post_init__(self):
        for name in ("sut_variants", "times", "weathers"):
            if not getattr(self, name):
                raise InvalidParameterError(f"test matrix list {name!r} must not be empty")
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")


@dataclass(frozen=True)
class TestCase:
    __test__ = False

    id: int
    sut: str
    conditions: Conditions
    seed: int
    scene: str
    timeout: float = 120.0

    def as_dict(self) -> dict:
        return {"id": self.id, "sut": self.sut, "conditions": self.conditions.as_dict(),
                "seed": self.seed, "scene": self.scene, "timeout": self.timeout}


@dataclass(frozen=True)
class BatchPlan:
    batches: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.batches)

    def batch_of(self, case_id: int) -> int:
        """1-based batch index containing ``case_id``."""
        for k, batch in enumerate(self.batches, start=1):
            if case_id in batch:
                return k
        raise KeyError(case_id)


def expand_matrix(m: TestMatrix, scene: str = "aeb_jumpscare", timeout: float = 120.0,
                  tables: ConditionTables = DEFAULT_TABLES) -> list[TestCase]:
    cases = []
    for sut in m.sut_variants:
        for time_of_day in m.times:
            for weather in m.weathers:
                cid = len(cases)
                cases.append(TestCase(cid, sut, derive_conditions(time_of_day, weather, tables),
                                      m.base_seed + cid, scene, timeout))
    return cases


def make_batches(cases, batch_size: int) -> BatchPlan:
    if batch_size < 1:
        raise InvalidParameterError("batch_size must be >= 1")
    ids = sorted(c.id if isinstance(c, TestCase) else int(c) for c in cases)
    return BatchPlan(tuple(tuple(ids[i:i + batch_size]) for i in range(0, len(ids), batch_size)))


def batch_count(n_cases: int, batch_size: int) -> int:
    return math.ceil(n_cases / batch_size)
