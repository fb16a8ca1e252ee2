"""Deterministic random streams keyed by (master seed, sample, trial).

Every consumer derives its own ``numpy.random.Generator`` from a
``SeedSequence`` whose spawn key names the purpose of the stream, so the
result of a trial never depends on which worker ran it or in what order.
"""

import numpy as np

_SAMPLE = 0
_TRIAL = 1
_AUX = 2


def _generator(master_seed, key):
    seq = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))


def sample_rng(master_seed, sample):
    """Stream that draws the spreading matrix of short-sequence sample ``sample``."""
    return _generator(master_seed, (_SAMPLE, int(sample)))


def trial_rng(master_seed, sample, trial):
    """Stream for one trial: bits, noise, random initial (and chips in long mode)."""
    return _generator(master_seed, (_TRIAL, int(sample), int(trial)))


def aux_rng(master_seed, *key):
    """Stream for experiments that are not BER trials (geometry tables, ...)."""
    return _generator(master_seed, (_AUX,) + tuple(int(k) for k in key))
