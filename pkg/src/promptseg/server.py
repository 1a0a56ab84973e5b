"""Stateful HTTP service for interactive segmentation sessions.

Endpoint surface (JSON control plane, raw binary bulk payloads):

    POST /v1/session                    -> 201 {token}
    PUT  /v1/session/{token}/image      -> 200 {digest, revision}   body: SVOL1
    PUT  /v1/session/{token}/mask       -> 200 {digest, revision}   body: RLE
    POST /v1/session/{token}/prompt     -> 200 RLE body + X-Mask-Digest /
                                           X-Revision / X-Changed-Voxels
    POST /v1/session/{token}/reset      -> 200 {revision}
    GET  /v1/session/{token}/mask       -> 200 RLE body + digest headers
    GET  /v1/session/{token}            -> 200 status snapshot
    GET  /v1/health                     -> 200 {"status": "ok"}

Error contract: 404 UnknownSession, 409 NoImage, 413 VolumeTooLarge,
422 invalid prompt / DimsMismatch, 428 StaleImage / StaleMask, 400 for
codec failures (error name echoed in the JSON body), 503 table full.
Failed requests never change session state; a prompt only lands after
both digest preconditions hold.

Sessions are in-memory and expire after an idle TTL. State-changing
requests within one session are serialized by a per-session lock; the
session table itself is safe under concurrent create/expire/lookup.
"""

from __future__ import annotations

import re
import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from fastapi import Body, FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .segmenter import (
    Prompt,
    ReferenceSegmenter,
    SegmenterBackend,
    SegmenterError,
    SegmenterParams,
    prompt_from_dict,
)
from .volume import (
    Mask3D,
    Volume3D,
    VolumeError,
    decode_svol,
    digest_mask,
    digest_volume,
    peek_svol_voxel_count,
    rle_decode,
    rle_encode,
)

DIGEST_RE = re.compile(r"^[0-9a-f]{64}$")

MASK_DIGEST_HEADER = "x-mask-digest"
REVISION_HEADER = "x-revision"
CHANGED_VOXELS_HEADER = "x-changed-voxels"


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 1527
    max_voxels: int = 2**28
    session_ttl_seconds: float = 3600.0
    max_sessions: int = 64
    tolerance: float = 10.0
    radius: int | None = None


class ApiError(Exception):
    def __init__(self, status: int, name: str, detail: str = ""):
        super().__init__(f"{status} {name}: {detail}")
        self.status = status
        self.name = name
        self.detail = detail


@dataclass
class Session:
    token: str
    last_touch: float
    image: Volume3D | None = None
    image_digest: str | None = None
    mask: Mask3D | None = None
    mask_digest: str | None = None
    prompt_log: list[tuple[Prompt, int]] = field(default_factory=list)
    revision: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class SessionTable:
    """Token-keyed session store with idle expiry and a capacity cap."""

    def __init__(self, max_sessions: int, ttl_seconds: float, clock: Callable[[], float] = time.monotonic):
        self.max_sessions = max_sessions
        self.ttl_seconds = ttl_seconds
        self.clock = clock
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self) -> Session:
        now = self.clock()
        with self._lock:
            self._expire_locked(now)
            if len(self._sessions) >= self.max_sessions:
                raise ApiError(503, "SessionTableFull", f"capacity {self.max_sessions} reached")
            token = secrets.token_hex(16)
            session = Session(token=token, last_touch=now)
            self._sessions[token] = session
            return session

    def get(self, token: str) -> Session:
        now = self.clock()
        with self._lock:
            session = self._sessions.get(token)
            if session is not None and now - session.last_touch > self.ttl_seconds:
                del self._sessions[token]
                session = None
            if session is None:
                raise ApiError(404, "UnknownSession", f"no session {token!r}")
            session.last_touch = now
            return session

    def expire(self, now: float | None = None) -> int:
        """Drop sessions idle longer than the TTL; returns the removal count."""
        with self._lock:
            return self._expire_locked(self.clock() if now is None else now)

    def _expire_locked(self, now: float) -> int:
        stale = [t for t, s in self._sessions.items() if now - s.last_touch > self.ttl_seconds]
        for token in stale:
            del self._sessions[token]
        return len(stale)

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


def _parse_expected_digest(payload: dict, key: str, required: bool) -> str | None:
    value = payload.get(key)
    if value is None:
        if required:
            raise ApiError(422, "InvalidPrompt", f"missing {key}")
        return None
    if not isinstance(value, str) or not DIGEST_RE.match(value):
        raise ApiError(422, "InvalidPrompt", f"{key} must be 64 lowercase hex chars")
    return value


def create_app(
    config: ServerConfig | None = None,
    backend: SegmenterBackend | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> FastAPI:
    config = config or ServerConfig()
    if backend is None:
        backend = ReferenceSegmenter(SegmenterParams(tolerance=config.tolerance, radius=config.radius))
    table = SessionTable(config.max_sessions, config.session_ttl_seconds, clock)

    app = FastAPI(title="promptseg server", docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.backend = backend
    app.state.table = table

    # The browser UI is served from a different origin; its scripts must be
    # able to read the digest/revision response headers.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["*"],
    )

    @app.exception_handler(ApiError)
    async def _api_error(request, exc: ApiError):
        return JSONResponse({"error": exc.name, "detail": exc.detail}, status_code=exc.status)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request, exc: RequestValidationError):
        return JSONResponse({"error": "InvalidPrompt", "detail": str(exc)}, status_code=422)

    def _mask_response(mask_bytes: bytes, digest: str, revision: int, changed: int | None = None) -> Response:
        headers = {MASK_DIGEST_HEADER: digest, REVISION_HEADER: str(revision)}
        if changed is not None:
            headers[CHANGED_VOXELS_HEADER] = str(changed)
        return Response(content=mask_bytes, media_type="application/octet-stream", headers=headers)

    def _require_image(session: Session) -> tuple[Volume3D, Mask3D]:
        if session.image is None or session.mask is None:
            raise ApiError(409, "NoImage", "session has no image")
        return session.image, session.mask

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/session", status_code=201)
    def create_session():
        session = table.create()
        return {"token": session.token}

    @app.get("/v1/session/{token}")
    def get_status(token: str):
        session = table.get(token)
        with session.lock:
            return {
                "has_image": session.image is not None,
                "image_digest": session.image_digest,
                "mask_digest": session.mask_digest,
                "revision": session.revision,
                "prompt_count": len(session.prompt_log),
            }

    @app.put("/v1/session/{token}/image")
    def put_image(token: str, body: bytes = Body(default=b"", media_type="application/octet-stream")):
        session = table.get(token)
        claimed = peek_svol_voxel_count(body)
        if claimed is not None and claimed > config.max_voxels:
            raise ApiError(413, "VolumeTooLarge", f"{claimed} voxels exceeds limit {config.max_voxels}")
        try:
            volume = decode_svol(body)
        except VolumeError as exc:
            raise ApiError(400, type(exc).__name__, str(exc)) from exc
        digest = digest_volume(volume)
        with session.lock:
            if digest == session.image_digest:
                return {"digest": digest, "revision": session.revision}
            session.image = volume
            session.image_digest = digest
            session.mask = Mask3D.zeros(volume.dims)
            session.mask_digest = digest_mask(session.mask)
            session.prompt_log.clear()
            session.revision += 1
            return {"digest": digest, "revision": session.revision}

    @app.put("/v1/session/{token}/mask")
    def put_mask(token: str, body: bytes = Body(default=b"", media_type="application/octet-stream")):
        session = table.get(token)
        with session.lock:
            image, _ = _require_image(session)
            try:
                mask = rle_decode(body)
            except VolumeError as exc:
                raise ApiError(400, type(exc).__name__, str(exc)) from exc
            if mask.dims != image.dims:
                raise ApiError(422, "DimsMismatch", f"mask dims {mask.dims} != image dims {image.dims}")
            digest = digest_mask(mask)
            if digest == session.mask_digest:
                return {"digest": digest, "revision": session.revision}
            session.mask = mask
            session.mask_digest = digest
            session.prompt_log.clear()
            session.revision += 1
            return {"digest": digest, "revision": session.revision}

    @app.post("/v1/session/{token}/prompt")
    def post_prompt(token: str, payload: dict = Body(...)):
        session = table.get(token)
        with session.lock:
            image, mask = _require_image(session)
            expected_image = _parse_expected_digest(payload, "expected_image_digest", required=True)
            expected_mask = _parse_expected_digest(payload, "expected_mask_digest", required=False)
            try:
                prompt = prompt_from_dict(payload.get("prompt"))
            except SegmenterError as exc:
                raise ApiError(422, type(exc).__name__, str(exc)) from exc
            if expected_image != session.image_digest:
                raise ApiError(428, "StaleImage", "expected_image_digest does not match the session image")
            if expected_mask is not None and expected_mask != session.mask_digest:
                raise ApiError(428, "StaleMask", "expected_mask_digest does not match the session mask")
            try:
                new_mask = backend.apply(image, mask, prompt)
            except SegmenterError as exc:
                raise ApiError(422, type(exc).__name__, str(exc)) from exc
            changed = int(np.count_nonzero(new_mask.bits != mask.bits))
            session.mask = new_mask
            session.mask_digest = digest_mask(new_mask)
            session.revision += 1
            session.prompt_log.append((prompt, session.revision))
            return _mask_response(rle_encode(new_mask), session.mask_digest, session.revision, changed)

    @app.post("/v1/session/{token}/reset")
    def reset_segment(token: str):
        session = table.get(token)
        with session.lock:
            image, _ = _require_image(session)
            session.mask = Mask3D.zeros(image.dims)
            session.mask_digest = digest_mask(session.mask)
            session.prompt_log.clear()
            session.revision += 1
            return {"revision": session.revision}

    @app.get("/v1/session/{token}/mask")
    def get_mask(token: str):
        session = table.get(token)
        with session.lock:
            _, mask = _require_image(session)
            return _mask_response(rle_encode(mask), session.mask_digest, session.revision)

    return app


def serve(config: ServerConfig | None = None) -> None:
    """Run the service with uvicorn; blocks until interrupted."""
    import uvicorn

    config = config or ServerConfig()
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
