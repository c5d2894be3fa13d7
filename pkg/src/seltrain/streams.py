"""Counter-based RNG stream derivation.

Every random draw in a simulation comes from a generator keyed by
``(seed, purpose, drop, realization, block)``. Streams never depend on the
order in which work is executed, so serial and parallel sweeps are
bit-identical, and policies compared at one seed share channel and noise
draws.
"""

from __future__ import annotations

import numpy as np

# Stable integer ids; append only, never renumber.
PURPOSES = {
    "drop": 1,
    "channel": 2,
    "noise": 3,
    "select": 4,
}


def derive_stream(seed: int, purpose: str, drop: int = 0, realization: int = 0,
                  block: int = 0) -> np.random.Generator:
    """Return an independent generator for the given labels."""
    try:
        pid = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown stream purpose {purpose!r}") from None
    labels = (pid, int(drop), int(realization), int(block))
    if min(labels) < 0:
        raise ValueError("stream labels must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=labels)
    return np.random.Generator(np.random.PCG64(ss))


class EpisodeStreams:
    """Stream factory for one (drop, realization) unit of work.

    :meth:`training_noise` memoizes draws so that several policies replayed
    on the same unit reuse one noise matrix per (block, tau).
    """

    def __init__(self, seed: int, drop: int = 0, realization: int = 0):
        self.seed = int(seed)
        self.drop = int(drop)
        self.realization = int(realization)
        self._noise = {}

    def __call__(self, purpose: str, block: int = 0) -> np.random.Generator:
        return derive_stream(self.seed, purpose, self.drop, self.realization, block)

    def training_noise(self, block: int, n_antennas: int, tau: int) -> np.ndarray:
        """Unit-variance CN noise of shape ``(n_antennas, tau)`` for one block."""
        key = (block, n_antennas, tau)
        out = self._noise.get(key)
        if out is None:
            g = self("noise", block)
            out = np.sqrt(0.5) * (g.standard_normal((n_antennas, tau))
                                  + 1j * g.standard_normal((n_antennas, tau)))
            out.setflags(write=False)
            self._noise[key] = out
        return out

    def clear_cache(self) -> None:
        self._noise.clear()

    def __repr__(self):
        return f"EpisodeStreams(seed={self.seed}, drop={self.drop}, realization={self.realization})"
