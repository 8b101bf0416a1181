# sparse_filter/monitor.py
import os
import statistics
import time
import tracemalloc
from typing import Any, Dict, List

import psutil

from asghf.sparse_filter.errors import InvalidArgumentError

# "thread" рахує лише CPU-час поточного потоку: паралельні прогони не заважають один одному
CLOCKS = {"wall": "perf_counter", "thread": "thread_time"}


class PerformanceMonitor:
    """Run timer (wall clock or per-thread CPU time); tracemalloc runs only with trace_memory=True."""

    def __init__(self, trace_memory: bool = False, clock: str = "wall"):
        if clock not in CLOCKS:
            raise InvalidArgumentError(f"Unknown clock {clock!r}; expected one of {tuple(CLOCKS)}")
        self.trace_memory = trace_memory
        self.clock = clock
        self.records: List[Dict[str, Any]] = []
        self._t0 = None
        self._proc = None

    def _now(self) -> float:
        return getattr(time, CLOCKS[self.clock])()

    def start_snapshot(self):
        if self.trace_memory:
            tracemalloc.start()
        self._proc = psutil.Process(os.getpid())
        self._t0 = self._now()

    def stop_snapshot(self, label: str = "") -> Dict[str, Any]:
        t1 = self._now()
        rec: Dict[str, Any] = {
            'label': label,
            'duration': t1 - self._t0,
            'rss': self._proc.memory_info().rss,
        }
        if self.trace_memory:
            current, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
            rec['current_alloc'] = current
            rec['peak_alloc'] = peak
        self.records.append(rec)
        return rec

    def durations(self, label: str = None) -> List[float]:
        return [r['duration'] for r in self.records if label is None or r['label'] == label]

    def aggregate(self, label: str = None) -> Dict[str, Any]:
        durations = self.durations(label)
        if not durations:
            return {}
        total_time = sum(durations)
        return {
            'runs': len(durations),
            'total_time': total_time,
            'avg_time': total_time / len(durations),
            'median_time': statistics.median(durations),
        }
