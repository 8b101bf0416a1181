# tests/test_perfmonitor.py
from unittest.mock import patch, MagicMock

import pytest

from asghf.sparse_filter.errors import InvalidArgumentError
from asghf.sparse_filter.monitor import PerformanceMonitor


def test_start_snapshot_sets_attributes():
    monitor = PerformanceMonitor()
    with patch("tracemalloc.start") as mock_tracemalloc_start, \
         patch("psutil.Process") as mock_process, \
         patch("time.perf_counter", return_value=10.0):
        monitor.start_snapshot()
        # без trace_memory tracemalloc не вмикаємо
        mock_tracemalloc_start.assert_not_called()
        mock_process.assert_called_once()
        assert monitor._proc is not None
        assert monitor._t0 == 10.0


def test_start_snapshot_with_memory_tracing():
    monitor = PerformanceMonitor(trace_memory=True)
    with patch("tracemalloc.start") as mock_tracemalloc_start, \
         patch("psutil.Process"):
        monitor.start_snapshot()
        mock_tracemalloc_start.assert_called_once()


def test_stop_snapshot_returns_dict():
    monitor = PerformanceMonitor()
    mock_proc = MagicMock()
    mock_proc.memory_info.return_value.rss = 123456
    monitor._proc = mock_proc
    monitor._t0 = 0.0

    with patch("time.perf_counter", return_value=1.5):
        result = monitor.stop_snapshot("GHF_3")

    assert result == {"label": "GHF_3", "duration": 1.5, "rss": 123456}
    # Перевіримо, що запис додано в records
    assert monitor.records[-1] == result


def test_stop_snapshot_with_memory_tracing():
    monitor = PerformanceMonitor(trace_memory=True)
    mock_proc = MagicMock()
    mock_proc.memory_info.return_value.rss = 1
    monitor._proc = mock_proc
    monitor._t0 = 0.0

    with patch("time.perf_counter", return_value=2.0), \
         patch("tracemalloc.get_traced_memory", return_value=(111, 222)), \
         patch("tracemalloc.stop") as mock_tracemalloc_stop:
        result = monitor.stop_snapshot()

    assert result["current_alloc"] == 111
    assert result["peak_alloc"] == 222
    mock_tracemalloc_stop.assert_called_once()


def test_aggregate_with_no_records():
    monitor = PerformanceMonitor()
    assert monitor.aggregate() == {}


def test_aggregate_with_records():
    monitor = PerformanceMonitor()
    monitor.records = [
        {"label": "GHF_3", "duration": 1.0, "rss": 0},
        {"label": "GHF_3", "duration": 3.0, "rss": 0},
        {"label": "ASGHF", "duration": 8.0, "rss": 0},
    ]
    result = monitor.aggregate("GHF_3")
    assert result["runs"] == 2
    assert result["total_time"] == 4.0
    assert result["avg_time"] == 2.0
    assert result["median_time"] == 2.0
    assert monitor.durations() == [1.0, 3.0, 8.0]
    assert monitor.aggregate()["median_time"] == 3.0


def test_thread_clock_uses_thread_time():
    monitor = PerformanceMonitor(clock="thread")
    with patch("psutil.Process") as mock_process, \
         patch("time.thread_time", side_effect=[4.0, 4.25]), \
         patch("time.perf_counter", side_effect=AssertionError("wall clock used")):
        mock_process.return_value.memory_info.return_value.rss = 7
        monitor.start_snapshot()
        result = monitor.stop_snapshot("SGHF_3")
    assert result["duration"] == 0.25


def test_unknown_clock_rejected():
    with pytest.raises(InvalidArgumentError):
        PerformanceMonitor(clock="cpu")
