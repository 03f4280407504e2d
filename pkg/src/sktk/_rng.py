"""Reproducible per-trial random streams.

Each trial draws from a Philox (counter-based) generator whose key is
derived from ``(seed, trial, stream)``; events within a trial consume the
stream in order, so event ``e`` of trial ``t`` is a fixed function of
``(seed, t, e)`` regardless of how trials are scheduled.
"""
import numpy as np

SSA_STREAM = 0
INIT_STREAM = 1
LAW_STREAM = 2


def trial_rng(seed: int, trial: int = 0, stream: int = SSA_STREAM) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial), int(stream)))
    return np.random.Generator(np.random.Philox(ss))
