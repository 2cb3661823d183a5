"""Seed derivation.

A run has one root seed; every sub-task gets ``derive_seed(root, label...)``,
the first 8 bytes of SHA-256 over the root and the labels. Re-running one
task with the same root and labels reproduces it without replaying others.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *labels: object) -> int:
    text = ":".join([str(root), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")
