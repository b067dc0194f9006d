"""
============================================================================
SYSTEM MODULE — RUN RESOURCE MONITOR
============================================================================
Measures wall time, CPU time, and peak resident memory of a block of work
(one verification suite, one CLI command) using psutil. A background
thread samples RSS every SYSMON_INTERVAL seconds while the block runs.
============================================================================
"""

import threading
import time
import logging

import psutil

from config import SYSMON_INTERVAL

logger = logging.getLogger(__name__)


class RunMonitor:
    """
    Context manager around a unit of work:

        with RunMonitor("moment") as mon:
            ...
        mon.get_status()  ->  {"wall_sec", "cpu_sec", "peak_rss_mb", ...}
    """

    def __init__(self, label: str):
        self.label = label
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._process = psutil.Process()
        self._thread: threading.Thread | None = None

        self.wall_sec: float    = 0.0
        self.cpu_sec: float     = 0.0
        self.peak_rss_mb: float = 0.0
        self.cpu_count: int     = psutil.cpu_count(logical=True) or 1
        self._t0 = 0.0
        self._cpu0 = 0.0

    # ── Sampling ─────────────────────────────────────────────────────────────

    def _sample(self) -> None:
        try:
            rss = self._process.memory_info().rss / 1024 / 1024
        except psutil.Error as exc:
            logger.debug(f"[SysMon] RSS sample failed: {exc}")
            return
        with self._lock:
            self.peak_rss_mb = max(self.peak_rss_mb, round(rss, 1))

    def _sample_loop(self) -> None:
        while not self._stop.wait(SYSMON_INTERVAL):
            self._sample()

    def _cpu_total(self) -> float:
        times = self._process.cpu_times()
        return times.user + times.system

    # ── Context Manager ──────────────────────────────────────────────────────

    def __enter__(self) -> "RunMonitor":
        self._t0 = time.perf_counter()
        self._cpu0 = self._cpu_total()
        self._sample()
        self._thread = threading.Thread(target=self._sample_loop, daemon=True,
                                        name=f"SysMon-{self.label}")
        self._thread.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        self._sample()
        with self._lock:
            self.wall_sec = round(time.perf_counter() - self._t0, 3)
            self.cpu_sec = round(self._cpu_total() - self._cpu0, 3)
        logger.info(f"[SysMon] {self.label}: {self.wall_sec:.2f}s wall, "
                    f"{self.cpu_sec:.2f}s CPU, peak RSS {self.peak_rss_mb:.0f} MB")

    # ── Public API ──────────────────────────────────────────────────────────

    def get_status(self) -> dict:
        with self._lock:
            return {
                "label":       self.label,
                "wall_sec":    self.wall_sec,
                "cpu_sec":     self.cpu_sec,
                "peak_rss_mb": self.peak_rss_mb,
                "cpu_count":   self.cpu_count,
            }
