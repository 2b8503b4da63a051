"""
Deterministic fan-out of independent (alpha, seed) jobs
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Dict, Hashable, Sequence

from tqdm import tqdm

logger = logging.getLogger(__name__)


def fan_out(fn: Callable[[Hashable], Any], keys: Sequence[Hashable], threads: int = 1,
            progress: bool = False, desc: str = "jobs") -> Dict[Hashable, Any]:
    """
    Run fn on every key and return {key: result} in sorted key order.

    Results do not depend on the worker count; the first failure is re-raised.
    """
    keys = list(keys)
    bar = tqdm(total=len(keys), desc=desc, disable=not progress, leave=False)
    results: Dict[Hashable, Any] = {}
    try:
        if threads <= 1:
            for key in keys:
                results[key] = fn(key)
                bar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=threads) as executor:
                futures = {executor.submit(fn, key): key for key in keys}
                for future in as_completed(futures):
                    results[futures[future]] = future.result()
                    bar.update(1)
    finally:
        bar.close()
    logger.debug(f"Completed {len(results)} {desc} on {max(threads, 1)} worker(s)")
    return {key: results[key] for key in sorted(results)}
