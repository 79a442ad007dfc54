import hashlib
from typing import Union

import numpy as np

SeedKey = Union[str, int]


def derive_seed(global_seed: int, *keys: SeedKey) -> int:
    """
    Derive a 64-bit seed from the global seed and an ordered list of keys
    (stage name, patient id, study id, ...). SHA-256 over the joined keys,
    so the value is the same on every machine and Python version.
    """
    material = "\x1f".join([str(int(global_seed))] + [str(k) for k in keys])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator seeded through numpy's SeedSequence."""
    return np.random.default_rng(int(seed))
