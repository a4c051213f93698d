"""Independent, reproducible random streams keyed by (master seed, seed, stream)."""

import numpy as np

STREAMS = {"env": 0, "policy": 1, "noise": 2, "select": 3, "prior": 4, "init": 5}


def make_rng(seed, stream, master=0):
    """Philox generator for one named stream of one seed."""
    sid = STREAMS[stream] if isinstance(stream, str) else int(stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master), int(seed), sid])))
