import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """
    Independent Philox stream for (seed, *keys).

    Every replicate, arm or pilot draw asks for its own key path, so results
    do not depend on the order in which workers run.
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit integer seed for a nested task, e.g. one replication of a study."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
