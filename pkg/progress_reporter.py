#!/usr/bin/env python3
"""
Progress and summary lines for sweep runs, written to stderr.
"""

import sys
import threading
import time
from typing import Optional, TextIO
from config import logger


class ProgressReporter:
    """Counts finished cells and prints throttled progress plus a one-line summary."""

    def __init__(self, label: str, total: int, quiet: bool = False,
                 stream: Optional[TextIO] = None, interval_s: float = 5.0):
        self.label = label
        self.total = total
        self.quiet = quiet
        self.stream = stream or sys.stderr
        self.interval_s = interval_s
        self.done = 0
        self.failed = 0
        self.started = time.monotonic()
        self._last = 0.0
        self._lock = threading.Lock()

    @property
    def elapsed_s(self) -> float:
        return time.monotonic() - self.started

    def send(self, message: str):
        if self.quiet:
            return
        print(message, file=self.stream, flush=True)

    def notify_start(self, detail: str = ''):
        self.send(f"[{self.label}] {self.total} cells{' | ' + detail if detail else ''}")

    def notify_cell(self, flag: str):
        with self._lock:
            self.done += 1
            if flag != 'ok':
                self.failed += 1
            now = self.elapsed_s
            if self.done < self.total and now - self._last < self.interval_s:
                return
            self._last = now
            done, failed = self.done, self.failed
        self.send(f"[{self.label}] {done}/{self.total} cells, {failed} flagged, {now:.1f}s")

    def notify_summary(self, n_cells: int, n_failed: int, wall_time_s: float, out_path: str = ''):
        line = f"{self.label}: {n_cells} cells, {n_failed} failed, {wall_time_s:.2f}s"
        if out_path:
            line += f" -> {out_path}"
        logger.debug(line)
        self.send(line)
