"""Label agreement and component matching."""
import itertools

import numpy as np


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair agreement between two labelings."""
    a = np.unique(np.asarray(a), return_inverse=True)[1]
    b = np.unique(np.asarray(b), return_inverse=True)[1]
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)

    def pairs(v):
        return float(np.sum(v * (v - 1) / 2))

    n = a.size
    index = pairs(table)
    rows, cols = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    expected = rows * cols / (n * (n - 1) / 2) if n > 1 else 0.0
    top = 0.5 * (rows + cols)
    if top == expected:
        return 1.0
    return (index - expected) / (top - expected)


def match_means(estimated, truth):
    """Smallest max-abs error over all pairings of estimated to true 1-D means.

    Exhaustive over permutations, so meant for a handful of components.
    Returns (error, permutation) with ``estimated[perm[j]]`` paired to ``truth[j]``.
    """
    est = np.asarray(estimated, dtype=np.float64).reshape(-1)
    tru = np.asarray(truth, dtype=np.float64).reshape(-1)
    if est.size != tru.size:
        raise ValueError("need as many estimates as true values")
    best = (np.inf, None)
    for perm in itertools.permutations(range(est.size)):
        err = float(np.max(np.abs(est[list(perm)] - tru)))
        if err < best[0]:
            best = (err, perm)
    return best
