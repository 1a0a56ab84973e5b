"""Command-line front end: one verb per protocol capability.

    promptseg serve                      run the server
    promptseg connect [URL]              open a session (URL is remembered)
    promptseg load volume.nii.gz         set the working image
    promptseg point X Y Z [--negative]   place prompts
    promptseg bbox X0 Y0 Z0 X1 Y1 Z1
    promptseg scribble X,Y,Z X,Y,Z ...
    promptseg lasso --axis z --slice K U,V U,V U,V ...
    promptseg reset | next | switch N    segment controls
    promptseg status                     local + server snapshot
    promptseg fetch out.svol             download the server mask
    promptseg replay script.json         run a prompt script, verify digests

Client state (token, image, segment masks) persists between invocations
under the user state directory so the verbs compose in shell scripts.
``PROMPTSEG_STATE_DIR`` relocates it. Server flags all have env-var twins
(PROMPTSEG_PORT, PROMPTSEG_HOST, ...); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .client import ClientError, ClientSession, PromptResult, Segment, connect, read_volume_file
from .scripting import ReplayMismatch, load_script, run_script
from .segmenter import (
    Axis,
    BBoxPrompt,
    LassoPrompt,
    PointPrompt,
    Polarity,
    ScribblePrompt,
    prompt_from_dict,
    prompt_to_dict,
)
from .server import ServerConfig, serve
from .userconfig import load_settings
from .volume import Volume3D, VolumeError, decode_svol, digest_mask, encode_svol, rle_decode, rle_encode

STATE_FILE = "state.json"

_UNSET = object()  # --radius may legitimately resolve to None (unbounded)


def state_dir() -> Path:
    override = os.environ.get("PROMPTSEG_STATE_DIR")
    if override:
        return Path(override)
    xdg = os.environ.get("XDG_STATE_HOME")
    base = Path(xdg) if xdg else Path.home() / ".local" / "state"
    return base / "promptseg"


def save_session(session: ClientSession) -> None:
    root = state_dir()
    root.mkdir(parents=True, exist_ok=True)
    state = {
        "server_url": session.server_url,
        "token": session.token,
        "server_revision": session.server_revision,
        "local_image_digest": session.local_image_digest,
        "acked_image_digest": session.acked_image_digest,
        "acked_mask_digest": session.acked_mask_digest,
        "active_segment": session.active_segment,
        "segments": [
            {"name": seg.name, "prompt_log": [prompt_to_dict(p) for p in seg.prompt_log]}
            for seg in session.segments
        ],
    }
    (root / STATE_FILE).write_text(json.dumps(state, indent=2))
    if session.local_image is not None:
        (root / "image.svol").write_bytes(encode_svol(session.local_image))
    for i, seg in enumerate(session.segments):
        (root / f"seg{i}.rle").write_bytes(rle_encode(seg.mask))
    i = len(session.segments)
    while (root / f"seg{i}.rle").exists():
        (root / f"seg{i}.rle").unlink()
        i += 1


def load_session() -> ClientSession:
    root = state_dir()
    path = root / STATE_FILE
    if not path.exists():
        raise ClientError("no active session; run `promptseg connect <URL>` first")
    state = json.loads(path.read_text())
    session = ClientSession(state["server_url"], state["token"])
    session.server_revision = state["server_revision"]
    session.acked_image_digest = state["acked_image_digest"]
    session.acked_mask_digest = state["acked_mask_digest"]
    image_path = root / "image.svol"
    if state["local_image_digest"] and image_path.exists():
        session.local_image = decode_svol(image_path.read_bytes())
        session.local_image_digest = state["local_image_digest"]
    for i, seg_state in enumerate(state["segments"]):
        mask = rle_decode((root / f"seg{i}.rle").read_bytes())
        session.segments.append(
            Segment(
                seg_state["name"],
                mask,
                digest_mask(mask),
                [prompt_from_dict(p) for p in seg_state["prompt_log"]],
            )
        )
    session.active_segment = state["active_segment"]
    return session


def _env(name: str, cast, default):
    raw = os.environ.get(name)
    if raw is None:
        return default
    return cast(raw)


def _parse_radius(raw: str):
    if raw.lower() in ("unbounded", "none", ""):
        return None
    return int(raw)


def _parse_coord(raw: str) -> tuple[int, int, int]:
    parts = raw.split(",")
    if len(parts) != 3:
        raise ClientError(f"expected X,Y,Z, got {raw!r}")
    return tuple(int(p) for p in parts)


def _parse_vertex(raw: str) -> tuple[float, float]:
    parts = raw.split(",")
    if len(parts) != 2:
        raise ClientError(f"expected U,V, got {raw!r}")
    return (float(parts[0]), float(parts[1]))


def _polarity(args) -> Polarity:
    return Polarity.NEGATIVE if args.negative else Polarity.POSITIVE


def _print_result(result: PromptResult) -> None:
    synced = [
        label
        for report in result.syncs
        for label, sent in (("image", report.image_uploaded), ("mask", report.mask_uploaded))
        if sent
    ]
    extra = f" (uploaded: {', '.join(synced)})" if synced else ""
    retry = " after one resync retry" if result.retried else ""
    print(f"changed {result.changed_voxels} voxels{retry}{extra}")
    print(f"mask digest {result.mask_digest}  revision {result.revision}")


def serve_config_from(args) -> ServerConfig:
    """Resolve server settings: explicit flag, then env-var twin, then default."""
    return ServerConfig(
        host=args.host if args.host is not None else _env("PROMPTSEG_HOST", str, "127.0.0.1"),
        port=args.port if args.port is not None else _env("PROMPTSEG_PORT", int, 1527),
        max_voxels=args.max_voxels if args.max_voxels is not None else _env("PROMPTSEG_MAX_VOXELS", int, 2**28),
        session_ttl_seconds=(
            args.session_ttl_seconds
            if args.session_ttl_seconds is not None
            else _env("PROMPTSEG_SESSION_TTL_SECONDS", float, 3600.0)
        ),
        max_sessions=args.max_sessions if args.max_sessions is not None else _env("PROMPTSEG_MAX_SESSIONS", int, 64),
        tolerance=args.tolerance if args.tolerance is not None else _env("PROMPTSEG_TOLERANCE", float, 10.0),
        radius=args.radius if args.radius is not _UNSET else _env("PROMPTSEG_RADIUS", _parse_radius, None),
    )


def cmd_serve(args) -> int:
    config = serve_config_from(args)
    print(f"promptseg server on {config.host}:{config.port}", file=sys.stderr)
    serve(config)
    return 0


def cmd_connect(args) -> int:
    url = args.server or load_settings().get("server_url")
    if not url:
        raise ClientError("no server URL given and none saved; run `promptseg connect <URL>`")
    session = connect(url)
    try:
        save_session(session)
    finally:
        session.close()
    print(f"session {session.token} on {session.server_url}")
    return 0


def cmd_load(args) -> int:
    session = load_session()
    try:
        volume = read_volume_file(args.path)
        if not args.path.endswith(".svol"):
            print(
                "note: NIfTI intensity scaling (scl_slope/scl_inter) is ignored; "
                "stored voxel values are used as-is",
                file=sys.stderr,
            )
        session.load_image(volume)
        save_session(session)
        nx, ny, nz = volume.dims
        print(f"loaded {nx}x{ny}x{nz} {volume.dtype} volume, digest {session.local_image_digest}")
        return 0
    finally:
        session.close()


def _run_prompt(prompt) -> int:
    session = load_session()
    try:
        result = session.prompt(prompt)
        save_session(session)
        _print_result(result)
        return 0
    finally:
        session.close()


def cmd_point(args) -> int:
    return _run_prompt(PointPrompt((args.x, args.y, args.z), _polarity(args)))


def cmd_bbox(args) -> int:
    corner_min = (args.x0, args.y0, args.z0)
    corner_max = (args.x1, args.y1, args.z1)
    return _run_prompt(BBoxPrompt(corner_min, corner_max, _polarity(args)))


def cmd_scribble(args) -> int:
    points = tuple(_parse_coord(raw) for raw in args.points)
    return _run_prompt(ScribblePrompt(points, _polarity(args)))


def cmd_lasso(args) -> int:
    polygon = tuple(_parse_vertex(raw) for raw in args.vertices)
    return _run_prompt(LassoPrompt(Axis(args.axis), args.slice, polygon, _polarity(args)))


def cmd_reset(args) -> int:
    session = load_session()
    try:
        session.reset_segment()
        save_session(session)
        print(f"reset {session.active().name}; revision {session.server_revision}")
        return 0
    finally:
        session.close()


def cmd_next(args) -> int:
    session = load_session()
    try:
        index = session.next_segment()
        save_session(session)
        print(f"created {session.segments[index].name} (active)")
        return 0
    finally:
        session.close()


def cmd_switch(args) -> int:
    session = load_session()
    try:
        session.switch_segment(args.index)
        save_session(session)
        print(f"active segment: {session.active().name}")
        return 0
    finally:
        session.close()


def cmd_status(args) -> int:
    session = load_session()
    try:
        remote = session.status()
        print(f"server   {session.server_url} revision {remote['revision']} prompts {remote['prompt_count']}")
        print(f"  image  {remote['image_digest'] or '(none)'}")
        print(f"  mask   {remote['mask_digest'] or '(none)'}")
        if session.local_image is not None:
            nx, ny, nz = session.local_image.dims
            print(f"local    {nx}x{ny}x{nz} {session.local_image.dtype} image {session.local_image_digest}")
        else:
            print("local    no image loaded")
        for i, seg in enumerate(session.segments):
            marker = "*" if i == session.active_segment else " "
            print(f" {marker} [{i}] {seg.name}  {seg.mask.count()} voxels  {seg.mask_digest}")
        return 0
    finally:
        session.close()


def cmd_fetch(args) -> int:
    session = load_session()
    try:
        mask, digest, revision = session.fetch_mask()
        spacing = session.local_image.spacing if session.local_image is not None else (1.0, 1.0, 1.0)
        volume = Volume3D(mask.dims, spacing, "U8", mask.bits)
        Path(args.path).write_bytes(encode_svol(volume))
        print(f"wrote {args.path} ({mask.count()} voxels set, digest {digest}, revision {revision})")
        return 0
    finally:
        session.close()


def cmd_replay(args) -> int:
    url = args.server or load_settings().get("server_url")
    if not url:
        raise ClientError("no server URL given and none saved")
    steps = load_script(args.script)
    try:
        report = run_script(steps, url, base_dir=Path(args.script).parent)
    except ReplayMismatch as exc:
        print(str(exc), file=sys.stderr)
        return 1
    print(f"replayed {report.steps_run} steps")
    for name, digest in report.segment_digests:
        print(f"  {name}: {digest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptseg", description="interactive segmentation sessions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the segmentation server")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--max-voxels", type=int, default=None)
    p.add_argument("--session-ttl-seconds", type=float, default=None)
    p.add_argument("--max-sessions", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=None, help="reference backend intensity tolerance")
    p.add_argument("--radius", type=_parse_radius, default=_UNSET, help="growth depth bound or 'unbounded'")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("connect", help="create a session (server URL is remembered)")
    p.add_argument("server", nargs="?", default=None)
    p.set_defaults(func=cmd_connect)

    p = sub.add_parser("load", help="load a .nii/.nii.gz/.svol volume")
    p.add_argument("path")
    p.set_defaults(func=cmd_load)

    for kind in ("point", "bbox", "scribble", "lasso"):
        p = sub.add_parser(kind, help=f"place a {kind} prompt")
        p.add_argument("--negative", action="store_true", help="subtract instead of add")
        if kind == "point":
            p.add_argument("x", type=int)
            p.add_argument("y", type=int)
            p.add_argument("z", type=int)
            p.set_defaults(func=cmd_point)
        elif kind == "bbox":
            for name in ("x0", "y0", "z0", "x1", "y1", "z1"):
                p.add_argument(name, type=int)
            p.set_defaults(func=cmd_bbox)
        elif kind == "scribble":
            p.add_argument("points", nargs="+", metavar="X,Y,Z")
            p.set_defaults(func=cmd_scribble)
        else:
            p.add_argument("--axis", choices=["x", "y", "z"], required=True)
            p.add_argument("--slice", type=int, required=True)
            p.add_argument("vertices", nargs="+", metavar="U,V")
            p.set_defaults(func=cmd_lasso)

    p = sub.add_parser("reset", help="zero the active segment locally and on the server")
    p.set_defaults(func=cmd_reset)

    p = sub.add_parser("next", help="create and activate a new empty segment")
    p.set_defaults(func=cmd_next)

    p = sub.add_parser("switch", help="activate a segment by index")
    p.add_argument("index", type=int)
    p.set_defaults(func=cmd_switch)

    p = sub.add_parser("status", help="show server and local state")
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("fetch", help="download the server mask as an SVOL1 U8 volume")
    p.add_argument("path")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("replay", help="run a prompt script and verify its digests")
    p.add_argument("script")
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ClientError, VolumeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
