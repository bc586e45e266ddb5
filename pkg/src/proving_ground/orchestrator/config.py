"""Campaign configuration: YAML parsing, strict key checking, defaults and a resolved dump."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from ..dynamics.params import CornerParams, SplineControlPoints, VehicleParams
from ..errors import ConfigError, InvalidParameterError
from ..scenario import SCENES, ConditionTables, Scene, TestMatrix, build_scene
from ..sensors import CameraIntrinsics, LidarConfig, camera_mount
from ..geometry import transform
from ..sut import DEFAULT_PROFILES, AebPlannerConfig, DetectorProfile


class RunMode(str, Enum):
    HEADLESS = "headless"
    RECORD_REPLAY = "record_replay"
    LIVE_STREAM = "live_stream"

    @classmethod
    def parse(cls, value) -> "RunMode":
        aliases = {"record": cls.RECORD_REPLAY, "stream": cls.LIVE_STREAM, "live": cls.LIVE_STREAM}
        if isinstance(value, RunMode):
            return value
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown run mode {value!r}; expected headless, record or stream") from None

    @property
    def level(self) -> int:
        return {RunMode.HEADLESS: 0, RunMode.RECORD_REPLAY: 1, RunMode.LIVE_STREAM: 2}[self]


@dataclass(frozen=True)
class StopConfig:
    budget: float = 120.0  # simulated seconds
    settle: float = 3.0  # keep running this long after a full stop or a collision
    stopped_speed: float = 1e-3
    fixed_ticks: int | None = None


@dataclass(frozen=True)
class SensorConfig:
    camera: CameraIntrinsics = CameraIntrinsics()
    camera_position: tuple[float, float, float] = (1.0, -0.4, 0.8)
    lidar: LidarConfig = LidarConfig()
    lidar_enabled: bool = True

    @property
    def camera_mount(self) -> np.ndarray:
        return camera_mount(*self.camera_position)


@dataclass(frozen=True)
class SchedulerConfig:
    job_name: str = "proving-ground"
    walltime: str = "02:00:00"
    cpus_per_task: int = 32
    mem_gb: int = 64
    partition: str = ""
    queue: str = ""
    account: str = ""
    command: str = "python -m proving_ground"


@dataclass(frozen=True)
class SyntheticWorkload:
    """Replaces the simulation with a fixed-duration stand-in (used for scaling measurements)."""

    case_seconds: float = 1.0
    busy: bool = False


@dataclass(frozen=True)
class CampaignConfig:
    name: str
    vehicle: VehicleParams
    scene: Scene
    matrix: TestMatrix
    profiles: dict
    planner: AebPlannerConfig = field(default_factory=AebPlannerConfig)
    kp: float = 0.2
    external_suts: dict = field(default_factory=dict)
    mode: RunMode = RunMode.HEADLESS
    worker_count: int = 1
    cross_batch_parallel: bool = False
    output_dir: str = "out"
    fos: float = 1.0
    dt: float = 0.01
    stop: StopConfig = StopConfig()
    sensors: SensorConfig = SensorConfig()
    condition_tables: ConditionTables = ConditionTables()
    resource_rate: float = 0.2
    stream_host: str = "127.0.0.1"
    stream_port: int = 0
    scheduler: SchedulerConfig = SchedulerConfig()
    synthetic: SyntheticWorkload | None = None
    source: str = ""

    def __post_init__(self):
        if self.worker_count < 1:
            raise ConfigError("worker_count must be >= 1")
        known = set(self.profiles) | set(self.external_suts)
        missing = [s for s in self.matrix.sut_variants if s not in known]
        if missing:
            raise ConfigError(f"matrix references unknown SUT profiles: {missing}")
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if not self.resource_rate > 0:
            raise ConfigError("resources.rate must be > 0")

    @property
    def campaign_dir(self) -> Path:
        return Path(self.output_dir) / self.name

    def with_overrides(self, **kwargs) -> "CampaignConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return _config_to_dict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# -- parsing helpers ----------------------------------------------------------------


def _check_keys(section: dict, path: str, required=(), optional=()):
    if not isinstance(section, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(section).__name__}")
    unknown = [k for k in section if k not in required and k not in optional]
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {', '.join(_join(path, k) for k in unknown)}")
    missing = [k for k in required if k not in section]
    if missing:
        raise ConfigError(f"{path or 'config'}: missing required key(s) {', '.join(_join(path, k) for k in missing)}")


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _pair(value, path):
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{path}: expected a [slip, force] pair")
    return float(value[0]), float(value[1])


CORNER_KEYS = ("sprung_mass", "wheel_mass", "natural_frequency", "damping_ratio", "mount_position")
SPLINE_KEYS = ("origin", "extremum", "asymptote")
VEHICLE_REQUIRED = tuple(f.name for f in dataclasses.fields(VehicleParams)
                         if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING)
VEHICLE_OPTIONAL = tuple(f.name for f in dataclasses.fields(VehicleParams) if f.name not in VEHICLE_REQUIRED)


def parse_vehicle(section: dict, path: str = "vehicle") -> VehicleParams:
    _check_keys(section, path, VEHICLE_REQUIRED, VEHICLE_OPTIONAL)
    kwargs = dict(section)
    corners = section["corners"]
    if not isinstance(corners, list) or len(corners) != 4:
        raise ConfigError(f"{path}.corners: expected a list of 4 corners (FL, FR, RL, RR)")
    parsed = []
    for i, c in enumerate(corners):
        cp = f"{path}.corners[{i}]"
        _check_keys(c, cp, CORNER_KEYS)
        parsed.append(CornerParams(**{**c, "mount_position": tuple(c["mount_position"])}))
    kwargs["corners"] = tuple(parsed)
    for name in ("tire_long", "tire_lat"):
        sp = section[name]
        _check_keys(sp, f"{path}.{name}", SPLINE_KEYS)
        kwargs[name] = SplineControlPoints(*(_pair(sp[k], f"{path}.{name}.{k}") for k in SPLINE_KEYS))
    kwargs["engine_torque_curve"] = tuple(tuple(p) for p in section["engine_torque_curve"])
    kwargs["gear_ratios"] = tuple(section["gear_ratios"])
    return VehicleParams(**kwargs)


def vehicle_to_dict(p: VehicleParams) -> dict:
    out = {}
    for f in dataclasses.fields(p):
        v = getattr(p, f.name)
        if f.name == "corners":
            v = [{"sprung_mass": c.sprung_mass, "wheel_mass": c.wheel_mass,
                  "natural_frequency": c.natural_frequency, "damping_ratio": c.damping_ratio,
                  "mount_position": list(c.mount_position)} for c in v]
        elif isinstance(v, SplineControlPoints):
            v = {"origin": list(v.origin), "extremum": list(v.extremum), "asymptote": list(v.asymptote)}
        elif isinstance(v, Enum):
            v = v.value
        elif f.name == "engine_torque_curve":
            v = [list(pt) for pt in v]
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def _parse_scene(value, path="scene") -> Scene:
    if isinstance(value, str):
        return build_scene(value)
    _check_keys(value, path, ("name", "lane", "spawn", "obstacles"))
    try:
        return Scene.from_dict(value)
    except (KeyError, TypeError, InvalidParameterError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


PROFILE_KEYS = ("max_detect_range", "confidence_slope", "miss_rate_base", "min_bbox_frac", "latency_ticks")


def _parse_sut(section: dict):
    _check_keys(section, "sut", (), ("profiles", "planner", "kp", "external"))
    profiles = dict(DEFAULT_PROFILES)
    for name, p in (section.get("profiles") or {}).items():
        _check_keys(p, f"sut.profiles.{name}", PROFILE_KEYS[:4], PROFILE_KEYS[4:])
        profiles[name] = DetectorProfile(name=name, **p)
    planner = section.get("planner") or {}
    _check_keys(planner, "sut.planner", (), ("trigger_classes", "min_confidence", "min_bbox_frac", "latch"))
    planner_cfg = AebPlannerConfig(**planner)
    external = {}
    for name, cmd in (section.get("external") or {}).items():
        if isinstance(cmd, str):
            cmd = cmd.split()
        if not (isinstance(cmd, list) and cmd):
            raise ConfigError(f"sut.external.{name}: expected a command list")
        external[name] = [str(c) for c in cmd]
    return profiles, planner_cfg, float(section.get("kp", 0.2)), external


CAMERA_KEYS = tuple(f.name for f in dataclasses.fields(CameraIntrinsics))
LIDAR_KEYS = ("mount", "r_min", "r_max", "theta_min", "theta_max", "theta_res",
              "phi_min", "phi_max", "phi_res", "update_rate", "enabled")


def _parse_sensors(section: dict) -> SensorConfig:
    _check_keys(section, "sensors", (), ("camera", "lidar"))
    cam = dict(section.get("camera") or {})
    _check_keys(cam, "sensors.camera", (), CAMERA_KEYS + ("mount",))
    position = tuple(cam.pop("mount", SensorConfig.camera_position))
    lid = dict(section.get("lidar") or {})
    _check_keys(lid, "sensors.lidar", (), LIDAR_KEYS)
    enabled = bool(lid.pop("enabled", True))
    if "mount" in lid:
        lid["mount"] = transform(np.eye(3), tuple(lid["mount"]))
    for k in ("theta_min", "theta_max", "theta_res", "phi_min", "phi_max", "phi_res"):
        if k in lid:
            lid[k] = math.radians(float(lid[k]))  # angles are given in degrees
    return SensorConfig(CameraIntrinsics(**cam), position, LidarConfig(**lid), enabled)


def parse_config(data: dict, source: str = "") -> CampaignConfig:
    if data is None:
        raise ConfigError("config is empty")
    top_required = ("campaign", "vehicle", "matrix")
    top_optional = ("scene", "sut", "mode", "worker_count", "cross_batch_parallel", "output_dir", "fos", "dt",
                    "stop", "sensors", "conditions", "resources", "stream", "scheduler", "synthetic")
    _check_keys(data, "", top_required, top_optional)
    try:
        vehicle = parse_vehicle(data["vehicle"])
        matrix_section = data["matrix"]
        _check_keys(matrix_section, "matrix", ("sut_variants", "times", "weathers"), ("batch_size", "base_seed"))
        matrix = TestMatrix(
            sut_variants=tuple(matrix_section["sut_variants"]),
            times=tuple(matrix_section["times"]),
            weathers=tuple(matrix_section["weathers"]),
            batch_size=int(matrix_section.get("batch_size", 32)),
            base_seed=int(matrix_section.get("base_seed", 0)),
        )
        scene = _parse_scene(data.get("scene", "aeb_jumpscare"))
        profiles, planner, kp, external = _parse_sut(data.get("sut") or {})
        stop = data.get("stop") or {}
        _check_keys(stop, "stop", (), ("budget", "settle", "stopped_speed", "fixed_ticks"))
        sensors = _parse_sensors(data.get("sensors") or {})
        conditions = data.get("conditions") or {}
        _check_keys(conditions, "conditions", (), ("sun_light", "attenuation", "visibility", "traction", "fog"))
        tables = ConditionTables().with_overrides(conditions)
        for t in matrix.times:
            if t not in tables.sun_light:
                raise ConfigError(f"matrix.times: unknown time of day {t!r}")
        for w in matrix.weathers:
            if w not in tables.visibility:
                raise ConfigError(f"matrix.weathers: unknown weather {w!r}")
        resources = data.get("resources") or {}
        _check_keys(resources, "resources", (), ("rate",))
        stream = data.get("stream") or {}
        _check_keys(stream, "stream", (), ("host", "port"))
        sched = data.get("scheduler") or {}
        _check_keys(sched, "scheduler", (), tuple(f.name for f in dataclasses.fields(SchedulerConfig)))
        synthetic = data.get("synthetic")
        if synthetic is not None:
            _check_keys(synthetic, "synthetic", (), ("case_seconds", "busy"))
            synthetic = SyntheticWorkload(**synthetic)
        return CampaignConfig(
            name=str(data["campaign"]),
            vehicle=vehicle,
            scene=scene,
            matrix=matrix,
            profiles=profiles,
            planner=planner,
            kp=kp,
            external_suts=external,
            mode=RunMode.parse(data.get("mode", "headless")),
            worker_count=int(data.get("worker_count", 1)),
            cross_batch_parallel=bool(data.get("cross_batch_parallel", False)),
            output_dir=str(data.get("output_dir", "out")),
            fos=float(data.get("fos", 1.0)),
            dt=float(data.get("dt", 0.01)),
            stop=StopConfig(**stop),
            sensors=sensors,
            condition_tables=tables,
            resource_rate=float(resources.get("rate", 0.2)),
            stream_host=str(stream.get("host", "127.0.0.1")),
            stream_port=int(stream.get("port", 0)),
            scheduler=SchedulerConfig(**sched),
            synthetic=synthetic,
            source=source,
        )
    except ConfigError:
        raise
    except (InvalidParameterError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> CampaignConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"{path}: parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return parse_config(data, source=str(path))


def example_config_path() -> Path:
    return Path(__file__).resolve().parent.parent / "configs" / "aeb_campaign.yaml"


# -- resolved dump ------------------------------------------------------------------


def _config_to_dict(cfg: CampaignConfig) -> dict:
    sensors = cfg.sensors
    lidar = sensors.lidar
    out = {
        "campaign": cfg.name,
        "mode": cfg.mode.value,
        "worker_count": cfg.worker_count,
        "cross_batch_parallel": cfg.cross_batch_parallel,
        "output_dir": cfg.output_dir,
        "fos": cfg.fos,
        "dt": cfg.dt,
        "stop": dataclasses.asdict(cfg.stop),
        "matrix": {
            "sut_variants": list(cfg.matrix.sut_variants),
            "times": list(cfg.matrix.times),
            "weathers": list(cfg.matrix.weathers),
            "batch_size": cfg.matrix.batch_size,
            "base_seed": cfg.matrix.base_seed,
        },
        "scene": cfg.scene.name if cfg.scene.name in SCENES and cfg.scene == build_scene(cfg.scene.name)
        else cfg.scene.as_dict(),
        "vehicle": vehicle_to_dict(cfg.vehicle),
        "sut": {
            "profiles": {name: {k: getattr(p, k) for k in PROFILE_KEYS} for name, p in cfg.profiles.items()},
            "planner": {"trigger_classes": sorted(cfg.planner.trigger_classes),
                        "min_confidence": cfg.planner.min_confidence,
                        "min_bbox_frac": cfg.planner.min_bbox_frac, "latch": cfg.planner.latch},
            "kp": cfg.kp,
            "external": {k: list(v) for k, v in cfg.external_suts.items()},
        },
        "sensors": {
            "camera": {**{k: getattr(sensors.camera, k) for k in CAMERA_KEYS},
                       "mount": list(sensors.camera_position)},
            "lidar": {"mount": [float(c) for c in lidar.mount[:3, 3]], "r_min": lidar.r_min, "r_max": lidar.r_max,
                      **{k: math.degrees(getattr(lidar, k)) for k in
                         ("theta_min", "theta_max", "theta_res", "phi_min", "phi_max", "phi_res")},
                      "update_rate": lidar.update_rate, "enabled": sensors.lidar_enabled},
        },
        "conditions": {
            "sun_light": dict(cfg.condition_tables.sun_light),
            "attenuation": dict(cfg.condition_tables.attenuation),
            "visibility": dict(cfg.condition_tables.visibility),
            "traction": dict(cfg.condition_tables.traction),
            "fog": sorted(cfg.condition_tables.fog),
        },
        "resources": {"rate": cfg.resource_rate},
        "stream": {"host": cfg.stream_host, "port": cfg.stream_port},
        "scheduler": dataclasses.asdict(cfg.scheduler),
    }
    if cfg.synthetic is not None:
        out["synthetic"] = dataclasses.asdict(cfg.synthetic)
    return out
