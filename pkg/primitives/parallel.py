"""
Thread pool and counter-based random streams.

Every random draw in the project comes from a Philox generator keyed by a
(seed, key...) tuple, so results never depend on how work is scheduled.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from django.conf import settings


def worker_threads(threads=None):
    """
    Number of worker threads to use.
    :param threads: explicit override; falls back to settings.SUBSIDY_LAB_THREADS
    :return: positive int
    """
    if threads is None:
        threads = getattr(settings, 'SUBSIDY_LAB_THREADS', 1) if settings.configured else 1
    return max(1, int(threads))


def ordered_map(func, items, threads=None):
    """
    Map ``func`` over ``items`` on a thread pool, returning results in input order.
    """
    items = list(items)
    n_threads = worker_threads(threads)
    if n_threads == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(func, items))


def substream(seed, *key):
    """
    Independent generator for the substream identified by ``key``.
    :param seed: root seed (non-negative int)
    :param key: non-negative ints naming the substream, e.g. (replication, hcp, facility)
    :return: numpy Generator backed by Philox
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))
