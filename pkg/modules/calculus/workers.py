"""
Block-parallel random draws. A request for n rows is cut into fixed blocks
of SAMPLE_BLOCK_SIZE; block k always uses the k-th child of
SeedSequence(seed), so output depends on (seed, block size) and never on
how many worker threads ran the blocks.
"""

import logging
import threading
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from config import SAMPLE_BLOCK_SIZE, MAX_THREADS
from modules.errors import ConfigError

logger = logging.getLogger(__name__)

_lock = threading.Lock()
_thread_cap: int | None = MAX_THREADS


def set_thread_cap(threads: int | None) -> None:
    """Cap worker threads for all later draws (None = executor default)."""
    global _thread_cap
    if threads is not None and threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}", "worker count")
    with _lock:
        _thread_cap = threads
    logger.debug(f"[Workers] Thread cap set to {threads}")


def get_thread_cap() -> int | None:
    with _lock:
        return _thread_cap


def seed_sequence(seed: int) -> np.random.SeedSequence:
    if seed is None or int(seed) < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed}", "seed")
    return np.random.SeedSequence(int(seed))


def block_sizes(n: int, block_size: int | None = None) -> list[int]:
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}", "sample size")
    size = block_size or SAMPLE_BLOCK_SIZE
    full, rest = divmod(int(n), size)
    return [size] * full + ([rest] if rest else [])


def chunked_draw(draw: Callable[[np.random.Generator, int], np.ndarray],
                 n: int, seed: int, block_size: int | None = None) -> np.ndarray:
    """
    Concatenate ``draw(rng_k, size_k)`` over the blocks of an n-row request.
    ``draw`` must return an array whose first axis has length size_k.
    """
    sizes = block_sizes(n, block_size)
    children = seed_sequence(seed).spawn(len(sizes))

    def _run(k: int) -> np.ndarray:
        return draw(np.random.default_rng(children[k]), sizes[k])

    if len(sizes) == 1:
        return _run(0)
    with ThreadPoolExecutor(max_workers=get_thread_cap()) as pool:
        blocks = list(pool.map(_run, range(len(sizes))))
    return np.concatenate(blocks, axis=0)
