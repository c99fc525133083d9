"""Labelled seed derivation.

Every source of randomness in the package draws from a child seed derived
from one master seed plus a label path (stage name, tree index, region id,
...). Child streams are therefore independent of execution order, which is
what makes parallel tree training and per-region sampling reproducible.
"""

import hashlib

import numpy as np


def derive_seed(master: int, *labels: object) -> int:
    """Return a 64-bit seed determined by ``master`` and the label path."""
    text = str(int(master)) + "/" + "/".join(str(part) for part in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(master: int, *labels: object) -> np.random.Generator:
    """A fresh generator seeded from ``derive_seed(master, *labels)``."""
    return np.random.default_rng(derive_seed(master, *labels))
