"""Job-array execution of a campaign on a local pool of worker processes.

Batches run one after another; the cases of a batch run concurrently, one OS
process per case, at most ``workers`` at a time. Workers communicate with the
coordinator only through their case directory and an event queue, so a crash
in one case cannot touch another case's files.
"""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
import os
import queue
import time
import traceback
from collections import deque
from dataclasses import dataclass, field
from multiprocessing.connection import wait
from pathlib import Path

from ..kpi import CampaignReport, TestVerdict, aggregate_results, speedup_report
from ..scenario import TestCase, expand_matrix, make_batches
from .config import CampaignConfig, RunMode, load_config
from .resources import ResourceSampler, read_resource_csv
from .runner import case_dir, run_instance
from .stream import StreamServer

log = logging.getLogger(__name__)

QUEUED, RUNNING, DONE, FAILED = "queued", "running", "done", "failed"
TERMINAL = (DONE, FAILED)
EXIT_FAILED_CASE = 3


class JobArray:
    """Per-case status bookkeeping for one campaign run."""

    def __init__(self, batches):
        self.batches = [tuple(b) for b in batches]
        self.status = {cid: QUEUED for b in self.batches for cid in b}
        self.worker = {cid: None for cid in self.status}
        self.diagnostic: dict[int, str] = {}

    def start(self, cid: int, worker: int):
        if self.status[cid] != QUEUED:
            raise RuntimeError(f"case {cid} is {self.status[cid]}, cannot start")
        if worker in {self.worker[c] for c, s in self.status.items() if s == RUNNING}:
            raise RuntimeError(f"worker slot {worker} is busy")
        self.status[cid] = RUNNING
        self.worker[cid] = worker

    def finish(self, cid: int, ok: bool, diagnostic: str = ""):
        if self.status[cid] in TERMINAL:
            raise RuntimeError(f"case {cid} already {self.status[cid]}")
        self.status[cid] = DONE if ok else FAILED
        if diagnostic:
            self.diagnostic[cid] = diagnostic

    @property
    def failed(self) -> list[int]:
        return sorted(c for c, s in self.status.items() if s == FAILED)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("case_id", "batch", "status", "worker", "diagnostic"))
            for k, batch in enumerate(self.batches, start=1):
                for cid in batch:
                    w.writerow((cid, k, self.status[cid], self.worker[cid], self.diagnostic.get(cid, "")))


@dataclass
class CampaignResult:
    report: CampaignReport
    job_array: JobArray
    verdicts: dict = field(default_factory=dict)
    stream_address: tuple | None = None

    @property
    def failed_cases(self) -> list[int]:
        return self.job_array.failed

    @property
    def exit_code(self) -> int:
        return 1 if self.failed_cases else 0


def _worker_main(case: TestCase, cfg: CampaignConfig, mode: RunMode, batch: int, events):
    publish = None
    if mode is RunMode.LIVE_STREAM:
        def publish(line):
            events.put(("record", line))
    try:
        events.put(("status", case.id, RUNNING))
        result = run_instance(case, cfg, mode, batch, publish)
    except BaseException:
        out = case_dir(cfg, case, batch)
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.txt").write_text(f"case_id={case.id}\nerror=worker crashed\n{traceback.format_exc()}")
        events.put(("status", case.id, FAILED))
        events.close()
        events.join_thread()
        os._exit(1)
    events.put(("status", case.id, result.status))
    events.close()
    events.join_thread()
    os._exit(0 if result.status == DONE else EXIT_FAILED_CASE)


def _read_diagnostic(path: Path) -> str:
    err = path / "error.txt"
    if err.exists():
        lines = [ln for ln in err.read_text().splitlines() if ln.startswith("error=")]
        return lines[0][len("error="):] if lines else "worker crashed"
    return ""


def _run_pool(cases, cfg, mode, batch_of, workers, job: JobArray, forward, ctx):
    """Run ``cases`` with at most ``workers`` concurrent processes."""
    events = ctx.Queue()
    pending = deque(cases)
    running: dict = {}  # sentinel -> (case, process, slot)
    free_slots = list(range(workers))

    def drain():
        while True:
            try:
                ev = events.get_nowait()
            except queue.Empty:
                return
            if ev[0] == "record":
                forward(ev[1])
            elif ev[0] == "status" and forward is not None:
                forward(json.dumps({"type": "status", "case_id": ev[1], "status": ev[2]}, separators=(",", ":")))

    while pending or running:
        while pending and free_slots:
            case = pending.popleft()
            slot = free_slots.pop(0)
            proc = ctx.Process(target=_worker_main, args=(case, cfg, mode, batch_of[case.id], events),
                               name=f"case-{case.id}", daemon=False)
            job.start(case.id, slot)
            proc.start()
            running[proc.sentinel] = (case, proc, slot)
        ready = wait(list(running), timeout=0.05)
        drain()
        for sentinel in ready:
            case, proc, slot = running.pop(sentinel)
            proc.join()
            free_slots.append(slot)
            free_slots.sort()
            out = case_dir(cfg, case, batch_of[case.id])
            ok = proc.exitcode == 0 and (out / "verdict.txt").exists()
            diagnostic = "" if ok else (_read_diagnostic(out) or f"worker exited with code {proc.exitcode}")
            if not ok:
                log.error("case %d failed to execute: %s", case.id, diagnostic)
            job.finish(case.id, ok, diagnostic)
    drain()
    events.close()


def plan_campaign(cfg: CampaignConfig):
    cases = expand_matrix(cfg.matrix, cfg.scene.name, cfg.stop.budget, cfg.condition_tables)
    return cases, make_batches(cases, cfg.matrix.batch_size)


def run_campaign(cfg: CampaignConfig, mode: RunMode | str | None = None, batches="all",
                 workers: int | None = None, cases: list[TestCase] | None = None,
                 stream_address: tuple | None = None, on_stream_ready=None) -> CampaignResult:
    """Execute the selected batches and write logs plus the campaign report.

    ``batches`` is ``"all"`` or an iterable of 1-based batch indices.
    ``on_stream_ready(address)`` is called once the live-stream socket is bound.
    """
    mode = RunMode.parse(mode or cfg.mode)
    workers = workers or cfg.worker_count
    if cases is None:
        cases, plan = plan_campaign(cfg)
    else:
        plan = make_batches(cases, cfg.matrix.batch_size)
    by_id = {c.id: c for c in cases}
    selected = list(range(1, len(plan) + 1)) if batches == "all" else [int(b) for b in batches]
    for k in selected:
        if not 1 <= k <= len(plan):
            raise ValueError(f"batch {k} outside 1..{len(plan)}")
    chosen = [plan.batches[k - 1] for k in selected]
    job = JobArray(chosen)
    batch_of = {cid: k for k, b in zip(selected, chosen) for cid in b}

    root = cfg.campaign_dir
    root.mkdir(parents=True, exist_ok=True)
    (root / "resolved_config.yaml").write_text(cfg.dump())

    server = None
    if mode is RunMode.LIVE_STREAM:
        host, port = stream_address or (cfg.stream_host, cfg.stream_port)
        # bind before anything runs so a bad address fails fast
        server = StreamServer(host, port, {"campaign": cfg.name, "mode": mode.value, "cases": len(cases),
                                           "batches": len(plan), "selected_batches": selected}).start()
        log.info("live stream on %s:%d", *server.address)
        if on_stream_ready is not None:
            on_stream_ready(server.address)
    forward = server.publish if server is not None else None

    ctx = mp.get_context("fork")
    speedups, peaks = {}, {}
    try:
        groups = [(f"all", [c for b in chosen for c in b])] if cfg.cross_batch_parallel and chosen else \
            [(str(k), list(b)) for k, b in zip(selected, chosen)]
        for label, ids in groups:
            if not ids:
                continue
            n_workers = max(1, min(workers, len(ids)))
            sampler = ResourceSampler(root / f"resources_batch{label}.csv", cfg.resource_rate).start()
            t0 = time.perf_counter()
            _run_pool([by_id[i] for i in ids], cfg, mode, batch_of, n_workers, job, forward, ctx)
            wall = time.perf_counter() - t0
            peaks[label] = sampler.stop()
            times = [_case_serial_time(cfg, by_id[i], batch_of[i]) for i in ids]
            speedups[label] = speedup_report([t for t in times if t is not None], wall, n_workers)
            log.info("batch %s: %d cases in %.1f s", label, len(ids), wall)
    finally:
        if server is not None:
            server.publish_record({"type": "end", "campaign": cfg.name,
                                   "failed": job.failed})
            time.sleep(0.05)
            server.close()

    job.write_csv(root / "job_array.csv")
    report = build_report(cfg, root, cases)
    report.speedups = speedups
    report.resource_peaks = peaks
    write_report(report, root)
    verdicts = load_verdicts(cfg, root)
    return CampaignResult(report, job, verdicts, server.address if server else None)


def _case_serial_time(cfg, case, batch) -> float | None:
    path = case_dir(cfg, case, batch) / "timing.json"
    try:
        return float(json.loads(path.read_text())["serial_estimate"])
    except (OSError, ValueError, KeyError):
        return None


def load_verdicts(cfg: CampaignConfig, root: Path | None = None) -> dict[int, TestVerdict]:
    root = Path(root or cfg.campaign_dir)
    out = {}
    for path in sorted(root.glob("batch*/case_*/verdict.txt")):
        v = TestVerdict.from_text(path.read_text())
        out[v.case_id] = v
    return out


def build_report(cfg: CampaignConfig, root: Path | None = None, cases: list[TestCase] | None = None) -> CampaignReport:
    """Aggregate the verdicts on disk for ``cases`` (default: the whole matrix).

    Cases without a verdict count as not passed and are listed in ``failed_cases``.
    """
    root = Path(root or cfg.campaign_dir)
    if cases is None:
        cases, _ = plan_campaign(cfg)
    verdicts = load_verdicts(cfg, root)
    groups = {}
    missing = []
    for sut in cfg.matrix.sut_variants:
        mine = [c for c in cases if c.sut == sut]
        passed = sum(1 for c in mine if c.id in verdicts and verdicts[c.id].passed)
        missing += [c.id for c in mine if c.id not in verdicts]
        groups[sut] = (passed, len(mine))
    report = aggregate_results(groups)
    report.failed_cases = sorted(missing)
    for path in sorted(root.glob("resources_batch*.csv")):
        label = path.stem[len("resources_batch"):]
        _, peak = read_resource_csv(path)
        if peak is not None:
            report.resource_peaks[label] = peak
    return report


def write_report(report: CampaignReport, root: Path):
    (root / "report.csv").write_text(report.to_csv())
    (root / "report.txt").write_text(report.to_text())


def report_from_campaign_dir(campaign_dir) -> CampaignReport:
    campaign_dir = Path(campaign_dir)
    cfg = load_config(campaign_dir / "resolved_config.yaml")
    cfg = cfg.with_overrides(output_dir=str(campaign_dir.parent), name=campaign_dir.name)
    report = build_report(cfg, campaign_dir)
    write_report(report, campaign_dir)
    return report
