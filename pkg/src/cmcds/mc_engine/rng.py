"""Counter-based random streams.

Every batch of paths draws from its own Philox stream whose key is the user
seed and whose counter starts at ``(0, 0, stream, batch)``.  A path's shocks
depend only on ``(seed, stream, batch, position in batch)``, so results do not
change with the number of workers.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def batch_generator(seed: int, batch: int, stream: int = 0) -> np.random.Generator:
    if seed < 0 or batch < 0 or stream < 0:
        raise ValueError("seed, batch and stream must be non-negative")
    counter = np.array([0, 0, stream & _MASK64, batch & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed & ((1 << 128) - 1), counter=counter))


def batch_slices(paths: int, batch_size: int):
    """``(batch_index, start, stop)`` covering ``paths`` in fixed-size batches."""
    if paths < 1 or batch_size < 1:
        raise ValueError("paths and batch_size must be >= 1")
    for b, start in enumerate(range(0, paths, batch_size)):
        yield b, start, min(start + batch_size, paths)
