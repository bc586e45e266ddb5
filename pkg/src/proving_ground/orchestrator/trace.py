"""Newline-delimited trace records and replay.

A trace starts with one header object naming the schema and version and
carrying everything needed to re-derive KPIs (scene, ego footprint geometry,
FOS). Then comes one ``tick`` object per simulation step and a closing ``end``
object. Replay recomputes every KPI row from the recorded poses and commands
rather than copying the recorded KPI values.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from ..errors import TraceError
from ..geometry import Footprint
from ..kpi import DTC_CAP, CollisionCounter, KpiRecord, format_kpi_csv, q6, verdict
from ..scenario import Scene

SCHEMA = "proving-ground-trace"
SCHEMA_VERSION = 1


def dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


class TraceWriter:
    def __init__(self, path, header: dict):
        self._fh = open(path, "w")
        self._fh.write(dumps({"type": "header", "schema": SCHEMA, "version": SCHEMA_VERSION, **header}) + "\n")
        self.ticks = 0

    def write(self, record: dict) -> str:
        line = dumps(record)
        self._fh.write(line + "\n")
        self.ticks += 1
        return line

    def close(self, status: str = "done"):
        if not self._fh.closed:
            self._fh.write(dumps({"type": "end", "ticks": self.ticks, "status": status}) + "\n")
            self._fh.close()


def ego_footprint(x: float, y: float, yaw: float, geometry: dict) -> Footprint:
    """Body rectangle from a recorded COM pose; mirrors ``VehicleModel.footprint``."""
    ox, oy = geometry["center_offset"]
    c, s = math.cos(yaw), math.sin(yaw)
    return Footprint(x + c * ox - s * oy, y + s * ox + c * oy, yaw,
                     geometry["half_length"], geometry["half_width"])


def _parse(line: str, lineno: int) -> dict:
    if not line.endswith("\n"):
        raise TraceError(lineno, "truncated record (no line terminator)")
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceError(lineno, f"corrupt record: {exc.msg}") from None
    if not isinstance(rec, dict) or "type" not in rec:
        raise TraceError(lineno, "record is not a typed object")
    return rec


def read_trace(path):
    """Validate a trace and return ``(header, tick_records)``."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise TraceError(1, "empty trace")
    header = _parse(lines[0], 1)
    if header.get("type") != "header" or header.get("schema") != SCHEMA:
        raise TraceError(1, "missing trace header")
    if header.get("version") != SCHEMA_VERSION:
        raise TraceError(1, f"unsupported schema version {header.get('version')!r}")
    ticks = []
    end = None
    last_t = -math.inf
    for lineno, line in enumerate(lines[1:], start=2):
        if end is not None:
            raise TraceError(lineno, "record after end marker")
        rec = _parse(line, lineno)
        kind = rec["type"]
        if kind == "end":
            end = rec
            if rec.get("ticks") != len(ticks):
                raise TraceError(lineno, f"end marker counts {rec.get('ticks')} ticks but {len(ticks)} were read")
            continue
        if kind != "tick":
            raise TraceError(lineno, f"unexpected record type {kind!r}")
        if rec.get("tick") != len(ticks):
            raise TraceError(lineno, f"expected tick {len(ticks)}, found {rec.get('tick')} (missing record)")
        if not rec["t"] > last_t:
            raise TraceError(lineno, "time is not increasing")
        last_t = rec["t"]
        ticks.append(rec)
    if end is None:
        raise TraceError(len(lines) + 1, "trace truncated: end marker missing")
    return header, ticks


def kpi_from_tick(rec: dict, scene: Scene, geometry: dict, counter: CollisionCounter) -> KpiRecord:
    st = rec["state"]
    ctrl = rec["control"]
    fp = ego_footprint(st["x"], st["y"], st["yaw"], geometry)
    gaps = scene.gaps(fp)
    dtc = min(min(gaps), DTC_CAP) if gaps else DTC_CAP
    count = counter.update_from_gaps(gaps)
    return KpiRecord(q6(rec["t"]), int(rec["aeb_trigger"]), q6(dtc), count, q6(ctrl["throttle"]),
                     q6(ctrl["brake"]), q6(st["v"]), ctrl["lights"])


def replay(trace_path):
    """Recompute the verdict and KPI CSV text of a recorded case without simulating."""
    header, ticks = read_trace(trace_path)
    if not ticks:
        raise TraceError(2, "trace holds no tick records")
    scene = Scene.from_dict(header["scene"])
    geometry = header["footprint"]
    counter = CollisionCounter()
    records = [kpi_from_tick(rec, scene, geometry, counter) for rec in ticks]
    v = verdict(records, header["fos"], header["case"]["id"])
    return v, format_kpi_csv(records)
