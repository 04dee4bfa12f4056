"""
Order-preserving fan-out of per-sample work.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from tqdm import tqdm

from scoreag.core.config import settings

# Set up logger
logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    fn: Callable[[T], R],
    items: Sequence[T],
    workers: Optional[int] = None,
    desc: Optional[str] = None,
) -> List[R]:
    """
    Apply ``fn`` to every item and return results in input order.

    Args:
        fn: Per-item function; must not share mutable state between items
        items: Work items
        workers: Thread count; defaults to ``settings.WORKERS``
        desc: Progress-bar label; no bar when omitted or disabled in settings

    Returns:
        One result per item, in the order of ``items``
    """
    workers = workers or settings.WORKERS
    show = bool(desc) and settings.show_progress
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=not show)]

    logger.debug(f"Fanning {len(items)} items over {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=not show))
