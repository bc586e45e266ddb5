"""Per-tick KPIs, collision counting, verdicts and campaign-level reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .errors import InvalidParameterError
from .geometry import Footprint, footprint_circle_distance, footprint_distance

DTC_CAP = 1.0e6
DEFAULT_FOS = 1.0
KPI_HEADER = ("t", "aeb_trigger", "dtc", "collision_count", "throttle", "brake", "speed", "lights")


def q6(x: float) -> float:
    """Round to the 6-decimal grid used in the CSV so logs and verdicts round-trip exactly."""
    return float(f"{x:.6f}")


@dataclass(frozen=True)
class KpiRecord:
    t: float
    aeb_trigger: int
    dtc: float
    collision_count: int
    throttle: float
    brake: float
    speed: float
    lights: str

    def __post_init__(self):
        if self.dtc < 0:
            raise InvalidParameterError(f"dtc must be >= 0, got {self.dtc}")

    def quantized(self) -> "KpiRecord":
        return KpiRecord(q6(self.t), int(self.aeb_trigger), q6(self.dtc), int(self.collision_count),
                         q6(self.throttle), q6(self.brake), q6(self.speed), str(self.lights))

    def csv_row(self) -> list[str]:
        return [f"{self.t:.6f}", str(int(self.aeb_trigger)), f"{self.dtc:.6f}", str(int(self.collision_count)),
                f"{self.throttle:.6f}", f"{self.brake:.6f}", f"{self.speed:.6f}", str(self.lights)]

    def as_dict(self) -> dict:
        return {"t": self.t, "aeb_trigger": self.aeb_trigger, "dtc": self.dtc,
                "collision_count": self.collision_count, "throttle": self.throttle,
                "brake": self.brake, "speed": self.speed, "lights": self.lights}

    @classmethod
    def from_dict(cls, d: dict) -> "KpiRecord":
        return cls(float(d["t"]), int(d["aeb_trigger"]), float(d["dtc"]), int(d["collision_count"]),
                   float(d["throttle"]), float(d["brake"]), float(d["speed"]), str(d["lights"]))


def _obstacle_gaps(ego: Footprint, scene) -> list[float]:
    if scene is None:
        return []
    if hasattr(scene, "gaps"):
        return scene.gaps(ego)
    out = []
    for o in scene:
        if isinstance(o, Footprint):
            out.append(footprint_distance(ego, o))
        else:
            out.append(footprint_circle_distance(ego, *o))
    return out


def distance_to_collision(ego: Footprint, scene) -> float:
    """Closest gap between the ego box and any solid obstacle, capped at ``DTC_CAP``.

    ``scene`` is a ``Scene`` or an iterable of obstacle footprints.
    """
    gaps = _obstacle_gaps(ego, scene)
    return min(min(gaps), DTC_CAP) if gaps else DTC_CAP


class CollisionCounter:
    """Counts rising edges of overlap, separately per obstacle."""

    def __init__(self, count: int = 0):
        if count < 0:
            raise InvalidParameterError("collision count must be >= 0")
        self.count = count
        self._touching: dict[int, bool] = {}

    def update_from_gaps(self, gaps) -> int:
        for i, g in enumerate(gaps):
            touching = g <= 0.0
            if touching and not self._touching.get(i, False):
                self.count += 1
            self._touching[i] = touching
        return self.count

    def update(self, ego: Footprint, scene) -> int:
        return self.update_from_gaps(_obstacle_gaps(ego, scene))


def collision_update(prev_count: int, ego: Footprint, scene, counter: CollisionCounter | None = None) -> int:
    """Functional form: pass the same ``counter`` each tick to carry the per-obstacle edge state."""
    if counter is None:
        counter = CollisionCounter(prev_count)
    else:
        counter.count = prev_count
    return counter.update(ego, scene)


# -- verdicts ---------------------------------------------------------------------


@dataclass(frozen=True)
class TestVerdict:
    __test__ = False

    case_id: int
    passed: bool
    min_dtc: float
    fos_violated: bool
    ticks: int
    wall_time: float = 0.0

    def to_text(self) -> str:
        """Deterministic serialization; wall time is left out so reruns compare byte-for-byte."""
        return (f"case_id={self.case_id}\n"
                f"passed={str(self.passed).lower()}\n"
                f"min_dtc={self.min_dtc:.6f}\n"
                f"fos_violated={str(self.fos_violated).lower()}\n"
                f"ticks={self.ticks}\n")

    @classmethod
    def from_text(cls, text: str) -> "TestVerdict":
        kv = dict(line.split("=", 1) for line in text.strip().splitlines())
        return cls(int(kv["case_id"]), kv["passed"] == "true", float(kv["min_dtc"]),
                   kv["fos_violated"] == "true", int(kv["ticks"]))


def verdict(records, fos: float = DEFAULT_FOS, case_id: int = 0, wall_time: float = 0.0) -> TestVerdict:
    records = list(records)
    if not records:
        raise InvalidParameterError("verdict needs at least one KPI record")
    passed = records[-1].collision_count == 0
    min_dtc = min(r.dtc for r in records)
    return TestVerdict(case_id, passed, min_dtc, passed and min_dtc < fos, len(records), wall_time)


# -- KPI CSV ----------------------------------------------------------------------


def format_kpi_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(KPI_HEADER)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def parse_kpi_csv(text: str) -> list[KpiRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != KPI_HEADER:
        raise InvalidParameterError("KPI CSV header mismatch")
    return [KpiRecord(float(r[0]), int(r[1]), float(r[2]), int(r[3]), float(r[4]), float(r[5]), float(r[6]), r[7])
            for r in rows[1:]]


class KpiWriter:
    """Streams KPI rows for one case to its CSV file."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(KPI_HEADER)

    def write(self, record: KpiRecord):
        self._w.writerow(record.csv_row())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- campaign aggregation -----------------------------------------------------------


@dataclass(frozen=True)
class ResourceSample:
    t: float
    cpu_cores_busy: float
    rss_memory: float  # GB

    def __post_init__(self):
        if self.cpu_cores_busy < 0 or self.rss_memory < 0:
            raise InvalidParameterError("resource samples must be >= 0")


def peak_sample(samples) -> ResourceSample:
    samples = list(samples)
    if not samples:
        return ResourceSample(0.0, 0.0, 0.0)
    return ResourceSample(max(s.t for s in samples), max(s.cpu_cores_busy for s in samples),
                          max(s.rss_memory for s in samples))


@dataclass(frozen=True)
class SutRow:
    sut: str
    passed: int
    total: int


@dataclass
class CampaignReport:
    rows: list[SutRow]
    cumulative: SutRow
    resource_peaks: dict = field(default_factory=dict)  # batch index -> ResourceSample
    speedups: dict = field(default_factory=dict)  # batch index -> speedup dict
    failed_cases: list = field(default_factory=list)  # ids that did not execute

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("sut", "passed", "total"))
        for r in self.rows + [self.cumulative]:
            w.writerow((r.sut, r.passed, r.total))
        return buf.getvalue()

    def to_text(self) -> str:
        width = max([len(r.sut) for r in self.rows] + [len("Cumulative"), len("SUT")])
        lines = [f"{'SUT':<{width}}  {'Passed':>6}  {'Total':>5}", "-" * (width + 15)]
        for r in self.rows:
            lines.append(f"{r.sut:<{width}}  {r.passed:>6}  {r.total:>5}")
        lines.append("-" * (width + 15))
        c = self.cumulative
        lines.append(f"{c.sut:<{width}}  {c.passed:>6}  {c.total:>5}")
        if self.failed_cases:
            lines.append("")
            lines.append("cases that failed to execute: " + ", ".join(str(i) for i in self.failed_cases))
        if self.resource_peaks:
            lines.append("")
            lines.append("batch  peak_cpu_cores  peak_rss_gb")
            for k in sorted(self.resource_peaks):
                p = self.resource_peaks[k]
                lines.append(f"{k:>5}  {p.cpu_cores_busy:>14.2f}  {p.rss_memory:>11.3f}")
        if self.speedups:
            lines.append("")
            lines.append("batch  theoretical  achieved  efficiency")
            for k in sorted(self.speedups):
                s = self.speedups[k]
                lines.append(f"{k:>5}  {s['theoretical']:>11.1f}  {s['achieved']:>8.2f}  {s['efficiency']:>10.3f}")
        return "\n".join(lines) + "\n"


def aggregate_results(groups: dict) -> CampaignReport:
    """``groups`` maps SUT name to either a list of verdicts or a ``(passed, total)`` pair."""
    rows = []
    for sut, value in groups.items():
        if isinstance(value, tuple) and len(value) == 2 and all(isinstance(v, int) for v in value):
            passed, total = value
        else:
            value = list(value)
            passed, total = sum(1 for v in value if v.passed), len(value)
        if not 0 <= passed <= total:
            raise InvalidParameterError(f"{sut}: passed count {passed} outside [0, {total}]")
        rows.append(SutRow(sut, passed, total))
    cumulative = SutRow("Cumulative", sum(r.passed for r in rows), sum(r.total for r in rows))
    return CampaignReport(rows, cumulative)


def speedup_report(per_case_serial_times, batch_wall_time: float, workers: int | None = None) -> dict:
    """Speedup of a parallel batch relative to running its cases one after another.

    ``workers`` is recorded for reference only; the theoretical bound is the
    number of cases, as every case could in principle run on its own node.
    """
    times = list(per_case_serial_times)
    if not batch_wall_time > 0:
        raise InvalidParameterError("batch wall time must be > 0")
    theoretical = float(len(times))
    achieved = math.fsum(times) / batch_wall_time
    return {
        "theoretical": theoretical,
        "achieved": achieved,
        "efficiency": achieved / theoretical if theoretical else 0.0,
        "workers": workers,
    }
