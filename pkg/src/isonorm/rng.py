"""Counter-based random streams and deterministic block-parallel evaluation.

Every random quantity in the package is drawn from an :class:`RngStream`, a
``(seed, stream_id)`` pair used as the Philox key.  Work that is split into
blocks derives one child stream per block, so results depend only on the
block layout and never on how many workers execute it.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

MASK64 = (1 << 64) - 1

#: default number of samples evaluated per block by :func:`map_blocks`
BLOCK_SIZE = 1 << 15

T = TypeVar("T")


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & MASK64)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at counter 0 of this stream."""
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream_id]))

    def child(self, *keys: int) -> "RngStream":
        """Deterministically derived sub-stream, e.g. ``stream.child(block_index)``."""
        entropy = [self.seed & 0xFFFFFFFF, self.seed >> 32,
                   self.stream_id & 0xFFFFFFFF, self.stream_id >> 32]
        for k in keys:
            k = int(k) & MASK64
            entropy += [k & 0xFFFFFFFF, k >> 32]
        sid = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
        return RngStream(self.seed, int(sid[0]) | (int(sid[1]) << 32))

    def spawn(self, count: int) -> list["RngStream"]:
        return [self.child(i) for i in range(count)]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id}


def as_stream(stream: RngStream | int | None) -> RngStream:
    if stream is None:
        return RngStream(0, 0)
    if isinstance(stream, RngStream):
        return stream
    return RngStream(int(stream), 0)


def worker_count() -> int:
    """Worker cap from ``ISONORM_THREADS`` (default 1).  Never affects results."""
    raw = os.environ.get("ISONORM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def block_sizes(count: int, block_size: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(int(count), block_size)
    return [block_size] * full + ([rest] if rest else [])


def parallel_map(fn: Callable[..., T], args: Sequence, workers: int | None = None) -> list[T]:
    """Apply ``fn`` to each element of ``args``; output order matches input order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ThreadPoolExecutor(max_workers=min(workers, len(args))) as pool:
        return list(pool.map(fn, args))


def map_blocks(fn: Callable[[np.random.Generator, int], np.ndarray], count: int,
               stream: RngStream, block_size: int = BLOCK_SIZE) -> np.ndarray:
    """Evaluate ``fn(generator, m)`` over fixed-size blocks and concatenate.

    Block ``i`` always uses ``stream.child(i)``, so the output is bit-identical
    for any worker count.
    """
    sizes = block_sizes(count, block_size)
    if not sizes:
        return np.empty(0)
    streams = stream.spawn(len(sizes))
    parts = parallel_map(lambda k: fn(streams[k].generator(), sizes[k]), range(len(sizes)))
    return np.concatenate(parts, axis=0)
