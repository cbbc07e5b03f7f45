import zlib
from typing import Union

import numpy as np


def _key_to_int(key: Union[int, str]) -> int:
    # crc32 is stable across processes, unlike the salted builtin hash()
    if isinstance(key, int):
        return key & 0xFFFFFFFF
    return zlib.crc32(str(key).encode('utf-8'))


def make_rng(seed: int, *keys: Union[int, str]) -> np.random.Generator:
    """
    Creates a counter-based generator whose stream is determined by a base seed and any number of keys.

    Streams derived from different keys never overlap, e.g. make_rng(42, 'train') and
    make_rng(42, 'test') are independent, and identical arguments always give bit-identical draws.

    Args:
        seed: Base seed of the experiment.
        keys: Integers or strings naming the sub-stream.

    Returns: Numpy generator backed by the Philox bit generator.
    """

    seed_sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seed_sequence))
