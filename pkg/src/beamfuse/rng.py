"""Deterministic named random streams.

Every stochastic operation in the package draws from a stream obtained
here, keyed by (seed, name). Streams are counter-based (Philox), so a
stream is fully determined by its key: re-creating it mid-run (e.g. when
resuming training at step k) yields the same draws as the original run.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, *names: int | str) -> np.random.Generator:
    """Return the generator for the stream identified by seed and names.

    Same (seed, names) always gives a generator producing identical draws,
    independent of any other stream.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    key = int.from_bytes(h.digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
