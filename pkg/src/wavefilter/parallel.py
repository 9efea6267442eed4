"""Worker-parallelism bound.

WAVEFILTER_THREADS caps how many workers the harness may use for independent
sub-runs (the PF and KF halves of a comparison run, ensemble replicas).
Every sub-run is pure given its seed streams, so results do not depend on
the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "WAVEFILTER_THREADS"


def max_workers() -> int:
    raw = os.environ.get(ENV_VAR)
    if not raw:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be an integer, got {raw!r}")
    return max(1, val)


def replica_map(fn, items: list) -> list:
    """Apply fn over items, threading up to the configured bound."""
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
