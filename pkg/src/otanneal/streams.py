"""Deterministic random streams keyed by (seed, replicate, particle).

Every particle of every replicate owns an independent Philox stream, so a
replicate's trajectory never depends on how replicates are scheduled across
workers.
"""

import numpy as np

# spawn-key slot reserved for ensemble-level randomness (refreshment clocks)
ENSEMBLE_SLOT = 2**31 - 1


def particle_stream(seed, replicate, particle):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(particle)))
    return np.random.Generator(np.random.Philox(ss))


def ensemble_stream(seed, replicate):
    return particle_stream(seed, replicate, ENSEMBLE_SLOT)
