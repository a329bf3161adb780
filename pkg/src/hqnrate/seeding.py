"""Deterministic seed derivation: every random stream is keyed by (run seed, stream ids...)."""
import numpy as np


def seed_key(seed, *extra) -> list:
    """Flatten an int or nested sequence seed plus extra stream ids into one entropy list."""
    out = []
    for part in (seed, *extra):
        if part is None:
            out.append(0)
        elif isinstance(part, (list, tuple, np.ndarray)):
            out.extend(seed_key(*part) if len(part) else [])
        else:
            out.append(int(part))
    return out


def rng_for(seed, *extra) -> np.random.Generator:
    return np.random.default_rng(seed_key(seed, *extra))
