"""Seed derivation: one root seed fans out into named sub-streams.

Every source of randomness (parameter init, splitting, shuffling, batch
corruption) draws from its own stream keyed by ``(root_seed, *names)``,
so changing one consumer never shifts the draws of another.

Stream scheme ``philox4x64-v1``: the key is the first 8 bytes of
SHA-256 over the dotted name string, feeding a Philox counter-based
generator. Counter-based generators make per-sample draw order
reproducible across implementations.
"""

from __future__ import annotations

import hashlib

import numpy as np

STREAM_SCHEME = "philox4x64-v1"


def derive_seed(root_seed: int, *names: object) -> int:
    """Derive a 64-bit sub-seed from a root seed and a name path."""
    tag = ":".join([str(int(root_seed))] + [str(n) for n in names])
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def philox(root_seed: int, *names: object) -> np.random.Generator:
    """Counter-based generator for the named sub-stream."""
    return np.random.Generator(np.random.Philox(key=derive_seed(root_seed, *names)))


def numpy_rng(root_seed: int, *names: object) -> np.random.Generator:
    """Default-bit-generator stream for bulk synthesis and shuffling."""
    return np.random.default_rng(derive_seed(root_seed, *names))


def torch_generator(root_seed: int, *names: object):
    import torch

    gen = torch.Generator()
    # torch seeds are signed 64-bit
    gen.manual_seed(derive_seed(root_seed, *names) & 0x7FFF_FFFF_FFFF_FFFF)
    return gen
