"""Dataset factories shared by several test modules."""

import numpy as np

from nancova import Dataset


def random_dataset(rng, sizes=(8, 11), d=1, levels=None):
    """Continuous (or ``levels``-valued ordinal) data with a real covariate link."""
    groups = []
    for i, n in enumerate(sizes):
        x = rng.normal(size=(n, d))
        y = 0.3 * i + x.sum(axis=1) * 0.7 + rng.normal(size=n)
        g = np.column_stack([y, x])
        if levels:
            g = np.floor(levels * (1 / (1 + np.exp(-g)))).clip(0, levels - 1)
        groups.append(g)
    return Dataset(tuple(groups))
