import os
from concurrent.futures import ThreadPoolExecutor


def max_workers() -> int:
    """Worker cap from VARCALC_THREADS (default: up to 4 cores)."""
    raw = os.environ.get("VARCALC_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


def pmap(fn, items):
    """Order-preserving map; threads only help numpy-heavy work."""
    items = list(items)
    w = min(max_workers(), len(items))
    if w <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))
