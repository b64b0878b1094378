"""Splittable deterministic random streams.

Every sampling operation in this package takes an explicit :class:`RngStream`.
A stream is fully identified by its 64-bit seed and its split path, so two
streams built from the same (seed, path) emit identical sample sequences.
``split`` derives child streams that are statistically independent of the
parent and of siblings with different labels; this is what lets concurrent
experiment cells draw noise without perturbing each other.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import InvalidParams

_U64 = 2**64


def _as_label(label: int | str) -> int:
    """Map a label to a 64-bit integer; strings are hashed stably."""
    if isinstance(label, bool):
        raise InvalidParams("stream labels must be ints or strings, not bool")
    if isinstance(label, int):
        if not 0 <= label < _U64:
            raise InvalidParams(f"integer label {label} outside [0, 2^64)")
        return label
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise InvalidParams(f"unsupported label type: {type(label).__name__}")


class RngStream:
    """A deterministic random stream keyed by (seed, path).

    The underlying generator is a Philox counter RNG keyed through
    ``numpy.random.SeedSequence`` with the split path as spawn key, so
    reconstructing a stream from the same (seed, path) always replays the
    same sequence regardless of what sibling streams did.
    """

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise InvalidParams("seed must be an integer")
        if not 0 <= seed < _U64:
            raise InvalidParams(f"seed {seed} outside [0, 2^64)")
        self.seed = seed
        self.path = tuple(_as_label(p) for p in path)
        self._gen: np.random.Generator | None = None

    def split(self, *labels: int | str) -> "RngStream":
        """Derive an independent child stream labelled by ``labels``."""
        if not labels:
            raise InvalidParams("split requires at least one label")
        return RngStream(self.seed, self.path + tuple(_as_label(l) for l in labels))

    @property
    def generator(self) -> np.random.Generator:
        """The numpy generator backing this stream (created lazily)."""
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
