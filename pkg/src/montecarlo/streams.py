"""
Seeded random streams and an order-preserving parallel map over path chunks.

Paths are cut into chunks of ``cfg.chunk_size``; chunk k always draws from
the k-th child of SeedSequence(rng_seed, stream), so results do not depend
on the number of workers or on scheduling.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Tuple, TypeVar

import numpy as np

from src.models.model_spec import SimConfig

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Separate stream families so estimators sharing a seed stay independent
STREAMS = {
    "branching": 0,
    "feynman-kac": 1,
    "qsd": 2,
    "nu": 3,
    "diffusion": 4,
}


def chunk_bounds(n_paths: int, chunk_size: int) -> List[Tuple[int, int]]:
    """Half-open [start, stop) index ranges covering 0..n_paths."""
    return [(start, min(start + chunk_size, n_paths)) for start in range(0, n_paths, chunk_size)]


def chunk_generators(seed: int, stream: str, n_chunks: int) -> List[np.random.Generator]:
    """One independent PCG64 generator per chunk."""
    root = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[stream],))
    return [np.random.Generator(np.random.PCG64(child)) for child in root.spawn(n_chunks)]


def run_chunks(
    task: Callable[[int, int, np.random.Generator], T],
    cfg: SimConfig,
    stream: str,
    n_paths: int = None,
) -> List[T]:
    """
    Run ``task(start, stop, rng)`` over every chunk of paths.

    Args:
        task: Pure function of its chunk range and generator
        cfg: Supplies the seed, chunk size and worker count
        stream: Stream family name
        n_paths: Number of paths (default ``cfg.n_paths``)

    Returns:
        List[T]: Chunk results in chunk order
    """
    n_paths = cfg.n_paths if n_paths is None else n_paths
    bounds = chunk_bounds(n_paths, cfg.chunk_size)
    generators = chunk_generators(cfg.rng_seed, stream, len(bounds))
    jobs = [(start, stop, rng) for (start, stop), rng in zip(bounds, generators)]
    logger.debug(f"Running {len(jobs)} chunks of stream '{stream}' on {cfg.workers} workers")

    if cfg.workers <= 1 or len(jobs) == 1:
        return [task(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        return list(executor.map(lambda job: task(*job), jobs))
