"""Counter-style deterministic seed derivation.

Every stochastic site in the package derives its own PCG64 stream from
(base seed, context fields) via blake2b, so runs replay identically across
platforms and serial/parallel schedules.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Recorded in checkpoints; bump if the derivation scheme ever changes.
PRNG_ID = "blake2b8/pcg64/1"

_MASK64 = (1 << 64) - 1


def derive_seed(base_seed: int, *fields: int | str) -> int:
    """Map (base_seed, fields...) to a 64-bit seed, order-sensitive."""
    h = hashlib.blake2b(digest_size=8)
    h.update((int(base_seed) & _MASK64).to_bytes(8, "little"))
    for f in fields:
        if isinstance(f, str):
            raw = f.encode("utf-8")
            h.update(b"s" + len(raw).to_bytes(4, "little") + raw)
        else:
            h.update(b"i" + (int(f) & _MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def generator(base_seed: int, *fields: int | str) -> np.random.Generator:
    """Fresh PCG64 generator on the derived stream."""
    return np.random.Generator(np.random.PCG64(derive_seed(base_seed, *fields)))
