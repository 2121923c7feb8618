"""Small shared helpers."""

from __future__ import annotations

import os


def worker_count(requested: int | None = None) -> int:
    """Worker count for parallel sections, capped by MTLSAR_THREADS."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("MTLSAR_THREADS")
    if cap is not None:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"MTLSAR_THREADS must be an integer, got {cap!r}")
    return max(1, n)
