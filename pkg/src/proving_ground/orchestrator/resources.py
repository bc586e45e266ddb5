"""Periodic CPU/RSS sampling of the worker processes of a batch."""

from __future__ import annotations

import csv
import logging
import threading
import time

import psutil

from ..kpi import ResourceSample, peak_sample

log = logging.getLogger(__name__)

RESOURCE_HEADER = ("t", "cpu_cores_busy", "rss_memory_gb")


class ResourceSampler:
    """Samples all live descendants of this process at ``rate`` Hz on a background thread.

    The first sample is taken immediately, then one per period until ``stop``.
    Per-process CPU fractions are summed into busy cores.
    """

    def __init__(self, path=None, rate: float = 0.2, root_pid: int | None = None):
        if not rate > 0:
            raise ValueError("sampling rate must be > 0")
        self.period = 1.0 / rate
        self.path = path
        self.samples: list[ResourceSample] = []
        self._root = psutil.Process(root_pid)
        self._procs: dict[int, psutil.Process] = {}
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, name="resource-sampler", daemon=True)
        self._t0 = 0.0

    def sample_once(self) -> ResourceSample:
        busy = rss = 0.0
        try:
            children = self._root.children(recursive=True)
        except psutil.Error as exc:
            log.warning("resource sampling failed: %s", exc)
            children = []
        live = {}
        for child in children:
            proc = self._procs.get(child.pid, child)
            try:
                # cpu_percent is measured since the previous call on the same Process object
                busy += proc.cpu_percent(None) / 100.0
                rss += proc.memory_info().rss
            except psutil.Error:
                continue
            live[child.pid] = proc
        self._procs = live
        s = ResourceSample(round(time.monotonic() - self._t0, 3), round(busy, 4), round(rss / 1e9, 6))
        self.samples.append(s)
        return s

    def _loop(self):
        while True:
            try:
                self.sample_once()
            except Exception as exc:  # sampling must never take the campaign down
                log.warning("resource sampling failed: %s", exc)
            if self._stop.wait(self.period):
                return

    def start(self) -> "ResourceSampler":
        self._t0 = time.monotonic()
        self._thread.start()
        return self

    def stop(self) -> ResourceSample:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join()
        peak = peak_sample(self.samples)
        if self.path is not None:
            write_resource_csv(self.path, self.samples, peak)
        return peak

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def write_resource_csv(path, samples, peak: ResourceSample):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("kind",) + RESOURCE_HEADER)
        for s in samples:
            w.writerow(("sample", f"{s.t:.3f}", f"{s.cpu_cores_busy:.4f}", f"{s.rss_memory:.6f}"))
        w.writerow(("peak", f"{peak.t:.3f}", f"{peak.cpu_cores_busy:.4f}", f"{peak.rss_memory:.6f}"))


def read_resource_csv(path) -> tuple[list[ResourceSample], ResourceSample | None]:
    samples, peak = [], None
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        s = ResourceSample(float(row[1]), float(row[2]), float(row[3]))
        if row[0] == "peak":
            peak = s
        else:
            samples.append(s)
    return samples, peak
