import time
from typing import Dict, Any, List, Optional
from dataclasses import dataclass, asdict, field
from datetime import datetime
import json
import logging

logger = logging.getLogger(__name__)

# Fields averaged by get_average_metrics
_AVERAGED = (
    "support_detection_time",
    "initial_solve_time",
    "regrid_time",
    "total_time",
    "grid_size",
    "points_solved",
    "total_iterations",
    "nonconverged_points",
    "segments",
    "mass",
)


@dataclass
class RunMetrics:
    """Timings and counters of one density computation"""
    timestamp: datetime
    support_detection_time: float  # seconds
    initial_solve_time: float  # seconds
    regrid_time: float  # seconds
    total_time: float  # seconds
    grid_size: int
    points_solved: int
    total_iterations: int
    nonconverged_points: int
    segments: int
    mass: float
    metadata: Dict[str, Any] = field(default_factory=dict)


class MetricsTracker:
    """Tracks timings and counters across density computations"""

    def __init__(self):
        self.metrics_history: List[RunMetrics] = []
        self.current_timers: Dict[str, float] = {}

    def start_timer(self, timer_name: str) -> None:
        """
        Start a named timer

        Args:
            timer_name (str): Name of the timer
        """
        self.current_timers[timer_name] = time.perf_counter()
        logger.debug(f"Started timer: {timer_name}")

    def stop_timer(self, timer_name: str) -> float:
        """
        Stop a timer and return the elapsed time

        Args:
            timer_name (str): Name of the timer

        Returns:
            float: Elapsed time in seconds, 0 for an unknown timer
        """
        if timer_name not in self.current_timers:
            logger.warning(f"Timer {timer_name} not found")
            return 0.0

        elapsed_time = time.perf_counter() - self.current_timers.pop(timer_name)
        logger.debug(f"Stopped timer {timer_name}: {elapsed_time:.4f}s")
        return elapsed_time

    def record_metrics(self, metrics: RunMetrics) -> None:
        self.metrics_history.append(metrics)
        logger.debug(f"Recorded metrics: {metrics}")

    def get_latest_metrics(self) -> Optional[RunMetrics]:
        if not self.metrics_history:
            return None
        return self.metrics_history[-1]

    def get_average_metrics(self, last_n: int = 10) -> Optional[RunMetrics]:
        """
        Average the last N records

        Args:
            last_n (int): Number of recent records to average

        Returns:
            Optional[RunMetrics]: Averaged record, counters truncated to int, or None
        """
        recent = self.metrics_history[-last_n:]
        if not recent:
            return None

        averages = {name: sum(getattr(m, name) for m in recent) / len(recent) for name in _AVERAGED}
        for name in ("grid_size", "points_solved", "total_iterations", "nonconverged_points", "segments"):
            averages[name] = int(averages[name])
        return RunMetrics(timestamp=datetime.now(), metadata={"runs_averaged": len(recent)}, **averages)

    def get_metrics_summary(self) -> Dict[str, Any]:
        if not self.metrics_history:
            return {"message": "No metrics recorded yet"}

        total_runs = len(self.metrics_history)
        recent = self.get_average_metrics(10)
        summary = asdict(recent)
        summary["timestamp"] = recent.timestamp.isoformat()
        return {
            "total_runs": total_runs,
            "average_total_time": round(sum(m.total_time for m in self.metrics_history) / total_runs, 4),
            "total_points_solved": sum(m.points_solved for m in self.metrics_history),
            "total_nonconverged_points": sum(m.nonconverged_points for m in self.metrics_history),
            "recent_performance": summary,
            "tracking_since": self.metrics_history[0].timestamp.isoformat(),
        }

    def clear_metrics(self) -> None:
        self.metrics_history.clear()
        self.current_timers.clear()
        logger.debug("Cleared all metrics")

    def export_metrics(self, filepath: str) -> None:
        """
        Export recorded metrics to a JSON file

        Args:
            filepath (str): Path to export file
        """
        try:
            metrics_data = []
            for metric in self.metrics_history:
                metric_dict = asdict(metric)
                metric_dict["timestamp"] = metric_dict["timestamp"].isoformat()
                metrics_data.append(metric_dict)

            with open(filepath, "w") as f:
                json.dump(metrics_data, f, indent=2)

            logger.info(f"Exported {len(metrics_data)} metrics to {filepath}")
        except Exception as e:
            logger.error(f"Error exporting metrics: {str(e)}")
            raise
