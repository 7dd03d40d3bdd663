"""Named deterministic random streams.

Every stochastic stage derives its generator from (master seed, stage
label), so stages can be reordered or skipped without perturbing each
other's draws.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream"]


def stream(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))
