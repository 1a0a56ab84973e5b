#!/usr/bin/env python3
"""Write the deterministic demo phantom next to the sample scripts.

Run once before replaying the bundled scripts:

    python scripts/make_demo_volume.py
    promptseg replay scripts/sample_two_segments.json --server http://127.0.0.1:1527
"""

from pathlib import Path

from promptseg.demo import demo_volume
from promptseg.volume import digest_volume, encode_svol

out = Path(__file__).parent / "demo_volume.svol"
volume = demo_volume()
out.write_bytes(encode_svol(volume))
nx, ny, nz = volume.dims
print(f"wrote {out} ({nx}x{ny}x{nz} {volume.dtype}, digest {digest_volume(volume)})")
