"""Seed derivation and counter-based random streams.

``derive_seed(master, tag, entity)`` is the first 8 bytes, read
little-endian, of BLAKE2b (digest_size=16, no key) over the UTF-8 string
``"dlad-seed/v1|<master>|<tag>|<entity>"`` with integers in decimal. Each
derived seed keys a Philox-4x64-10 counter-based bit generator (numpy's
``Philox(key=seed)``, counter starting at zero), so every (purpose, entity)
pair owns an independent stream and nothing depends on the order in which
streams are created.
"""

import hashlib

import numpy as np

SEED_DOMAIN = "dlad-seed/v1"
MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, purpose_tag: str, entity_id=0) -> int:
    msg = f"{SEED_DOMAIN}|{int(master_seed) & MASK64}|{purpose_tag}|{entity_id}".encode("utf-8")
    digest = hashlib.blake2b(msg, digest_size=16).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int) -> np.random.Generator:
    """Generator over a fresh Philox stream keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))


def derived_stream(master_seed: int, purpose_tag: str, entity_id=0) -> np.random.Generator:
    return stream(derive_seed(master_seed, purpose_tag, entity_id))
