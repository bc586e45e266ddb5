"""One test case: the fixed-timestep sensors -> SUT -> dynamics -> KPI loop."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..dynamics import VehicleModel
from ..errors import ProvingGroundError, SimulationDiverged
from ..geometry import invert_rigid
from ..kpi import CollisionCounter, KpiRecord, KpiWriter, TestVerdict, verdict
from ..scenario import TestCase
from ..sensors import camera_projection_matrix, lidar_scan
from ..sut import AebPlannerConfig, ExternalSut, ReferenceAeb, SensorFrame, observe_obstacles
from .config import CampaignConfig, RunMode
from .trace import TraceWriter, kpi_from_tick

log = logging.getLogger(__name__)


def case_dir(cfg: CampaignConfig, case: TestCase, batch: int) -> Path:
    return cfg.campaign_dir / f"batch{batch}" / f"case_{case.id:04d}"


@dataclass
class InstanceResult:
    case_id: int
    status: str  # "done" or "failed"
    verdict: TestVerdict | None
    paths: dict = field(default_factory=dict)
    wall_time: float = 0.0
    error: str = ""
    last_tick: int = -1


def _make_sut(case: TestCase, cfg: CampaignConfig):
    target = cfg.scene.lane.target_speed
    if case.sut in cfg.external_suts:
        return ExternalSut(cfg.external_suts[case.sut], case.seed, target)
    planner = AebPlannerConfig(trigger_classes=cfg.planner.trigger_classes,
                               min_confidence=cfg.planner.min_confidence,
                               min_bbox_frac=cfg.planner.min_bbox_frac, latch=cfg.planner.latch)
    return ReferenceAeb(cfg.profiles[case.sut], case.seed, target, planner, cfg.kp,
                        cfg.sensors.camera.vertical_scale)


def _trace_header(case: TestCase, cfg: CampaignConfig, model: VehicleModel) -> dict:
    return {
        "case": case.as_dict(),
        "campaign": cfg.name,
        "scene": cfg.scene.as_dict(),
        "footprint": {"center_offset": [-model.com[0], -model.com[1]],
                      "half_length": model.half_length, "half_width": model.half_width},
        "fos": cfg.fos,
        "dt": cfg.dt,
    }


def _write_failure(path: Path, case: TestCase, message: str, last_tick: int):
    (path / "error.txt").write_text(f"case_id={case.id}\nlast_valid_tick={last_tick}\nerror={message}\n")


def run_instance(case: TestCase, cfg: CampaignConfig, mode: RunMode | str | None = None, batch: int = 1,
                 publish=None) -> InstanceResult:
    """Simulate one case and write its logs under its own case directory.

    ``publish`` (live-stream mode) receives each serialized tick record.
    """
    mode = RunMode.parse(mode or cfg.mode)
    out = case_dir(cfg, case, batch)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    cpu_started = time.process_time()
    paths = {"kpi": out / "kpi.csv", "verdict": out / "verdict.txt"}
    if cfg.synthetic is not None:
        return _run_synthetic(case, cfg, out, paths, started, cpu_started)

    model = VehicleModel(cfg.vehicle)
    scene = cfg.scene
    conditions = case.conditions
    state = model.initial_state(*scene.spawn)
    sensors = cfg.sensors
    cam = sensors.camera
    cam_mount = sensors.camera_mount
    P = camera_projection_matrix(cam)
    lidar_every = max(1, round(1.0 / (sensors.lidar.update_rate * cfg.dt)))
    geometry = {"center_offset": [-model.com[0], -model.com[1]],
                "half_length": model.half_length, "half_width": model.half_width}
    stop = cfg.stop
    max_ticks = stop.fixed_ticks if stop.fixed_ticks is not None else int(round(stop.budget / cfg.dt))
    settle_ticks = int(round(stop.settle / cfg.dt))

    trace = None
    if mode.level >= RunMode.RECORD_REPLAY.level:
        paths["trace"] = out / "trace.ndjson"
        trace = TraceWriter(paths["trace"], _trace_header(case, cfg, model))

    sut = _make_sut(case, cfg)
    counter = CollisionCounter()
    records: list[KpiRecord] = []
    lidar_points, lidar_min = 0, None
    triggered = False
    end_countdown = None
    tick = -1
    status, error = "done", ""
    try:
        with KpiWriter(paths["kpi"]) as kpi_out:
            for tick in range(max_ticks):
                t = tick * cfg.dt
                # sensors
                T_wc = state.pose @ cam_mount
                observations = observe_obstacles(T_wc, scene, invert_rigid(T_wc), P, cam.width, cam.height)
                if sensors.lidar_enabled and tick % lidar_every == 0:
                    cloud = lidar_scan(state, sensors.lidar, scene, timestamp=t)
                    lidar_points = len(cloud)
                    lidar_min = float(cloud.ranges.min()) if lidar_points else None
                frame = SensorFrame(t, state.v, observations, conditions, lidar_points, lidar_min)
                # SUT
                result = sut(frame)
                control = result.control
                # dynamics
                state = model.step(state, control, scene, conditions, cfg.dt)
                t_next = (tick + 1) * cfg.dt
                rec = {
                    "type": "tick", "tick": tick, "t": t_next,
                    "case_id": case.id,
                    "state": {"x": state.x, "y": state.y, "yaw": state.yaw, "v": state.v,
                              "gear": state.gear, "engine_rpm": state.engine_rpm},
                    "sensors": {"obstacles": [[o.class_tag, o.range] for o in observations],
                                "lidar_points": lidar_points, "lidar_min_range": lidar_min},
                    "detections": [[d.class_tag, d.confidence, d.bbox_height_frac, d.range]
                                   for d in result.detections],
                    "control": {"throttle": control.throttle, "brake": control.brake,
                                "steering": control.steering, "lights": control.lights.value},
                    "aeb_trigger": int(result.trigger),
                }
                # KPI
                kpi = kpi_from_tick(rec, scene, geometry, counter)
                records.append(kpi)
                kpi_out.write(kpi)
                if trace is not None:
                    rec["kpi"] = kpi.as_dict()
                    line = trace.write(rec)
                    if publish is not None:
                        publish(line)
                # stop condition: settle after a collision or after a full stop post-trigger
                if stop.fixed_ticks is None:
                    triggered = triggered or bool(result.trigger)
                    if end_countdown is None and (kpi.collision_count > 0 or
                                                  (triggered and abs(state.v) < stop.stopped_speed)):
                        end_countdown = settle_ticks
                    elif end_countdown is not None:
                        end_countdown -= 1
                        if end_countdown <= 0:
                            break
    except SimulationDiverged as exc:
        status, error = "failed", f"{type(exc).__name__}: {exc}"
        tick -= 1
    except ProvingGroundError as exc:
        status, error = "failed", f"{type(exc).__name__}: {exc}"
        tick -= 1
    finally:
        sut.close()
        if trace is not None:
            trace.close(status)

    wall = time.perf_counter() - started
    if status == "failed" or not records:
        _write_failure(out, case, error or "no ticks simulated", tick)
        log.warning("case %d failed at tick %d: %s", case.id, tick, error)
        return InstanceResult(case.id, "failed", None, paths, wall, error, tick)
    v = verdict(records, cfg.fos, case.id, wall)
    paths["verdict"].write_text(v.to_text())
    # the loop is CPU-bound, so its CPU time estimates the uncontended serial run time
    _write_timing(out, wall, time.process_time() - cpu_started, serial=time.process_time() - cpu_started)
    return InstanceResult(case.id, status, v, paths, wall, last_tick=tick)


def _write_timing(out: Path, wall: float, cpu: float, serial: float):
    (out / "timing.json").write_text(json.dumps({"wall_time": wall, "cpu_time": cpu, "serial_estimate": serial}))


def _run_synthetic(case, cfg, out, paths, started, cpu_started) -> InstanceResult:
    """Fixed-duration stand-in case: sleeps (or spins) and reports a trivial pass."""
    seconds = cfg.synthetic.case_seconds
    if cfg.synthetic.busy:
        end = time.perf_counter() + seconds
        x = 0.0
        while time.perf_counter() < end:
            x = math.sin(x + 1.0)
    else:
        time.sleep(seconds)
    rec = KpiRecord(0.0, 0, 1.0e6, 0, 0.0, 0.0, 0.0, "off")
    with KpiWriter(paths["kpi"]) as w:
        w.write(rec)
    wall = time.perf_counter() - started
    v = verdict([rec], cfg.fos, case.id, wall)
    paths["verdict"].write_text(v.to_text())
    cpu = time.process_time() - cpu_started
    _write_timing(out, wall, cpu, serial=cpu if cfg.synthetic.busy else seconds)
    return InstanceResult(case.id, "done", v, paths, wall)
