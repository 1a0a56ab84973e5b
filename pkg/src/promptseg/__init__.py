"""Interactive 3D segmentation sessions over HTTP.

A prompt-session server with a deterministic reference segmenter, a
synchronizing client SDK and CLI, and the binary formats they share.
"""

from .client import ClientSession, PromptResult, Segment, SyncReport, connect, read_volume_file
from .scripting import ReplayReport, load_script, parse_script, run_script
from .segmenter import (
    Axis,
    BBoxPrompt,
    LassoPrompt,
    PointPrompt,
    Polarity,
    Prompt,
    ReferenceSegmenter,
    ScribblePrompt,
    SegmenterBackend,
    SegmenterParams,
    apply_prompt,
    otsu_threshold,
    rasterize_polygon,
    region_grow,
)
from .server import ServerConfig, create_app, serve
from .volume import (
    Mask3D,
    Volume3D,
    decode_svol,
    digest_mask,
    digest_volume,
    encode_svol,
    parse_nifti,
    rle_decode,
    rle_encode,
)

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "BBoxPrompt",
    "ClientSession",
    "LassoPrompt",
    "Mask3D",
    "PointPrompt",
    "Polarity",
    "Prompt",
    "PromptResult",
    "ReferenceSegmenter",
    "ReplayReport",
    "ScribblePrompt",
    "Segment",
    "SegmenterBackend",
    "SegmenterParams",
    "ServerConfig",
    "SyncReport",
    "Volume3D",
    "apply_prompt",
    "connect",
    "create_app",
    "decode_svol",
    "digest_mask",
    "digest_volume",
    "encode_svol",
    "load_script",
    "otsu_threshold",
    "parse_nifti",
    "parse_script",
    "rasterize_polygon",
    "read_volume_file",
    "region_grow",
    "rle_decode",
    "rle_encode",
    "run_script",
    "serve",
]
