"""Deterministic RNG substream derivation.

One master seed governs a run.  Every consumer derives an independent stream
from (seed, stream tag, *indices), so batches are order-independent, the
gold-standard estimator can replay exactly the Gaussian vectors the mirror
descent consumed, and chemical-potential scan points are decoupled.
"""

import numpy as np

STREAM_GRADIENT = 1
STREAM_POTENTIAL = 2
STREAM_MUSCAN = 3


def substream(seed, *key):
    """Generator for the given (seed, *key) tuple; stable across calls."""
    entropy = (int(seed),) + tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def gradient_batch(seed, iteration, n, n_samples):
    """The (n_samples, n) standard-Gaussian block for a 1-based iteration.

    Sample j comes from substream (seed, STREAM_GRADIENT, iteration, j); the
    same discipline is used by the mirror-descent estimator and the
    gold-standard density, which must consume identical vectors.
    """
    z = np.empty((n_samples, n))
    for j in range(n_samples):
        z[j] = substream(seed, STREAM_GRADIENT, iteration, j).standard_normal(n)
    return z


def potential_seed(seed):
    """SeedSequence for the background-charge placement."""
    return np.random.SeedSequence((int(seed), STREAM_POTENTIAL))
