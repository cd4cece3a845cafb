"""Deterministic random streams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, label: str) -> np.random.Generator:
    """Generator for a named task, reproducible given (seed, label).

    Distinct labels give statistically independent streams; the label is
    hashed with crc32 so stream identity survives interpreter restarts.
    """
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def substream(seed: int, label: str, index: int) -> np.random.Generator:
    """Indexed member of a labeled family (per-cell, per-iteration draws)."""
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(key, int(index)))
    )
