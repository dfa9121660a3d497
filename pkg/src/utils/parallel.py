#!/usr/bin/env python3
import logging
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger('stablefield.parallel')


def ordered_map(fn, items, workers=1):
    """
    Apply fn to every item, possibly on a thread pool, keeping input order.

    Callers reduce the returned list themselves in a fixed order, so results
    do not depend on the worker count.

    Args:
        fn (callable): Function of one argument
        items (iterable): Work items
        workers (int): Thread count; 1 or less runs inline

    Returns:
        list: fn(item) for every item, in input order
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("Mapping %s items on %s workers", len(items), workers)
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(fn, items))
