"""Deterministic synthetic phantom used by sample scripts, demos, and tests.

Terraced background plateaus (so tolerance-based growing has clean
boundaries), one bright sphere, one brighter slab, and a whisper of
seeded noise that the default tolerance absorbs.
"""

from __future__ import annotations

import numpy as np

from .volume import Volume3D

DEMO_DIMS = (24, 20, 16)
DEMO_SEED = 20240601


def demo_volume() -> Volume3D:
    nx, ny, nz = DEMO_DIMS
    x, y, z = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    vol = 40 + 6 * ((x // 6) + (y // 5) + (z // 4))

    sphere = (x - 7) ** 2 + (y - 6) ** 2 + (z - 5) ** 2 <= 16
    vol[sphere] = 160
    vol[14:22, 10:18, 8:14] = 220

    rng = np.random.default_rng(DEMO_SEED)
    vol = vol + rng.integers(0, 3, size=vol.shape)
    flat = np.clip(vol, 0, 255).astype(np.uint8).transpose(2, 1, 0).reshape(-1)
    return Volume3D(DEMO_DIMS, (1.0, 1.0, 1.5), "U8", flat)
