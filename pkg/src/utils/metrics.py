"""
Metrics collection for solver and training monitoring
"""

from prometheus_client import Counter, Histogram, Gauge
from functools import wraps
import time
from typing import Callable


# Define metrics
solver_runs = Counter(
    'mmdt_solver_runs_total',
    'Total number of hinge-loss solves',
    ['problem', 'status']
)

step_latency = Histogram(
    'mmdt_step_latency_seconds',
    'Alternating-minimization half-step latency',
    ['step'],
    buckets=[0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0]
)

objective_gauge = Gauge(
    'mmdt_objective',
    'Latest joint objective value',
    ['step']
)


def track_step_latency(step_name: str):
    """
    Decorator to track half-step execution latency

    Args:
        step_name: Name of the step (classifier, transform)

    Returns:
        Decorator function
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                step_latency.labels(step=step_name).observe(time.perf_counter() - start_time)
        return wrapper
    return decorator


def record_solve(problem: str, converged: bool):
    """Record a hinge solve outcome"""
    solver_runs.labels(problem=problem, status='converged' if converged else 'max_passes').inc()


def record_objective(step: str, value: float):
    """Record the latest joint objective"""
    objective_gauge.labels(step=step).set(value)
