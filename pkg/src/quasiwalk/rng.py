"""Counter-based random streams.

Every stream is a Philox generator whose 128-bit key is derived from the
master seed and a path of labels/indices, so a trial's draws depend only on
(seed, path) and never on scheduling.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def _feed(h, p) -> None:
    if isinstance(p, (int, np.integer)):
        h.update(b"i" + struct.pack("<q", int(p)))
    elif isinstance(p, tuple) and all(isinstance(x, (int, np.integer)) for x in p):
        h.update(b"t" + struct.pack(f"<{len(p)}q", *p))
    elif isinstance(p, tuple):
        h.update(b"(")
        for x in p:
            _feed(h, x)
        h.update(b")")
    else:
        h.update(b"s" + str(p).encode())
    h.update(b"|")


def _path_word(path) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in path:
        _feed(h, p)
    return int.from_bytes(h.digest(), "little")


def stream_key(seed: int, *path) -> int:
    return ((int(seed) & _MASK64) << 64) | _path_word(path)


def stream(seed: int, *path) -> np.random.Generator:
    """Independent generator for (seed, *path)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *path)))
