"""Per-device randomness sources.

Every key generation and signature nonce draws from an ``Entropy`` object
owned by the device, not by the protocol state, so that a harness can seed
it for reproducible runs or pin it to adversary-chosen bytes.
"""

from __future__ import annotations

import hashlib
import os


class Entropy:
    """Randomness source: OS entropy, a seeded SHA-256 counter stream, or pinned bytes."""

    def __init__(self, seed: bytes | None = None):
        self._seed = seed
        self._counter = 0
        self._pinned: bytes | None = None

    @classmethod
    def seeded(cls, *parts: object) -> Entropy:
        label = "/".join(str(p) for p in parts).encode()
        return cls(hashlib.sha256(b"entropy:" + label).digest())

    @property
    def pinned(self) -> bool:
        return self._pinned is not None

    def pin(self, fixed: bytes | None) -> None:
        """Make every later draw return ``fixed`` (cycled or cut to length); ``None`` unpins."""
        if fixed is not None and not fixed:
            raise ValueError("pinned randomness must be non-empty")
        self._pinned = fixed

    def __call__(self, n: int) -> bytes:
        if self._pinned is not None:
            reps = -(-n // len(self._pinned))
            return (self._pinned * reps)[:n]
        if self._seed is None:
            return os.urandom(n)
        out = b""
        while len(out) < n:
            out += hashlib.sha256(self._seed + self._counter.to_bytes(8, "big")).digest()
            self._counter += 1
        return out[:n]
