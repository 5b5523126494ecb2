import json
from datetime import datetime

import pytest

from esdmix.metrics import MetricsTracker, RunMetrics


def _record(total_time=1.0, grid_size=100, nonconverged=0, mass=1.0):
    return RunMetrics(
        timestamp=datetime.now(),
        support_detection_time=0.1,
        initial_solve_time=0.5,
        regrid_time=0.4,
        total_time=total_time,
        grid_size=grid_size,
        points_solved=grid_size,
        total_iterations=10 * grid_size,
        nonconverged_points=nonconverged,
        segments=1,
        mass=mass,
    )


def test_timer():
    tracker = MetricsTracker()
    tracker.start_timer("solve")
    elapsed = tracker.stop_timer("solve")
    assert elapsed >= 0.0
    assert "solve" not in tracker.current_timers


def test_unknown_timer_is_zero():
    assert MetricsTracker().stop_timer("missing") == 0.0


def test_latest_and_average():
    tracker = MetricsTracker()
    assert tracker.get_latest_metrics() is None
    assert tracker.get_average_metrics() is None

    tracker.record_metrics(_record(total_time=1.0, grid_size=100))
    tracker.record_metrics(_record(total_time=3.0, grid_size=201, mass=0.5))

    assert tracker.get_latest_metrics().grid_size == 201
    average = tracker.get_average_metrics()
    assert average.total_time == pytest.approx(2.0)
    assert average.grid_size == 150
    assert average.mass == pytest.approx(0.75)
    assert average.metadata == {"runs_averaged": 2}
    assert tracker.get_average_metrics(last_n=1).total_time == pytest.approx(3.0)


def test_summary():
    tracker = MetricsTracker()
    assert tracker.get_metrics_summary() == {"message": "No metrics recorded yet"}

    tracker.record_metrics(_record(nonconverged=2))
    tracker.record_metrics(_record(nonconverged=1))
    summary = tracker.get_metrics_summary()
    assert summary["total_runs"] == 2
    assert summary["total_points_solved"] == 200
    assert summary["total_nonconverged_points"] == 3
    assert summary["average_total_time"] == 1.0
    json.dumps(summary)


def test_export_and_clear(tmp_path):
    tracker = MetricsTracker()
    tracker.record_metrics(_record())
    path = tmp_path / "metrics.json"
    tracker.export_metrics(str(path))

    exported = json.loads(path.read_text())
    assert len(exported) == 1
    assert exported[0]["grid_size"] == 100
    datetime.fromisoformat(exported[0]["timestamp"])

    tracker.clear_metrics()
    assert tracker.metrics_history == []
