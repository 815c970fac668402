"""Deterministic parallel mapping.

Workers only change who executes a task, never the task inputs or the order
in which results are aggregated, so outputs are identical for any worker
count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

from .errors import ConfigError

WORKERS_ENV_VAR = "HETFAC_WORKERS"


def workers_from_env(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV_VAR)
    if raw is None:
        return default
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be >= 1, got {workers}")
    return workers


def ordered_map(fn, tasks, workers: int = 1) -> list:
    """Map ``fn`` over ``tasks``, returning results in task order.

    ``fn`` must be a picklable module-level callable when workers > 1.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    chunksize = max(1, len(tasks) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, tasks, chunksize=chunksize))
