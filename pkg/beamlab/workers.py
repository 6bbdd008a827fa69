import logging

logger = logging.getLogger(__name__)


def ordered_map(func, items, workers=1):
    """
    Apply func to every item, results in input order.

    With workers > 1 the calls run in a thread pool; numpy and scipy
    release the GIL in their kernels. Every func used with this is pure,
    so the result does not depend on the worker count.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    from concurrent.futures import ThreadPoolExecutor

    logger.debug('mapping %d items over %d workers', len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def test_ordered_map():
    assert ordered_map(lambda x: x * x, [3, 1, 2]) == [9, 1, 4]
    assert ordered_map(lambda x: x * x, [3, 1, 2], workers=3) == [9, 1, 4]
    assert ordered_map(abs, []) == []
