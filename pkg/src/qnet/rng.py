"""Deterministic random substreams.

All randomness in the package flows through counter-based Philox streams
keyed by a 64-bit seed plus a tuple of string/int tags, so that channel
sampling, position draws and requirement draws never perturb each other
and fixtures are reproducible across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag: str | int) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *tags: str | int) -> np.random.Generator:
    """Return an independent generator for (seed, tags).

    Distinct tag tuples yield statistically independent streams; the same
    tuple always yields the same stream.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
