"""Deterministic seed derivation.

Every random stream in the simulator is derived from a base seed plus a
tuple of context parts (trial index, node index, phase name, ...). String
parts are folded through SHA-256 so the derivation is stable across runs,
platforms and process launches.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _as_entropy(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def seed_sequence(*parts) -> np.random.SeedSequence:
    """Stable SeedSequence for a (base_seed, *context) tuple."""
    if not parts:
        raise ValueError("at least one seed part is required")
    return np.random.SeedSequence([_as_entropy(p) for p in parts])


def rng_for(*parts) -> np.random.Generator:
    """Fresh Generator for the given derivation path."""
    return np.random.default_rng(seed_sequence(*parts))


SEED_POLICY = "numpy.SeedSequence([base_seed, sha256(part)[:8] for each context part])"
