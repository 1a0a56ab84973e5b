"""Client SDK: session handle, digest-based sync, and segment bookkeeping.

The guiding contract is transfer minimization: the client tracks the last
digests the server acknowledged and uploads the image or active mask only
when the local copy differs. Prompts carry the believed digests as
preconditions; a 428 from the server invalidates the stale ack, triggers
exactly one resync, and retries once. Two 428s in a row indicate a logic
bug and surface as :class:`SyncLoop`.

Segments are purely client-side: each holds its own mask and prompt log.
Switching segments re-arms the mask upload so the server's input mask
always matches the active segment before the next prompt, and creating a
new segment pushes an empty input mask immediately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .segmenter import Prompt, prompt_to_dict
from .userconfig import load_settings, save_settings
from .volume import (
    Mask3D,
    Volume3D,
    VolumeError,
    decode_svol,
    digest_mask,
    digest_volume,
    encode_svol,
    parse_nifti,
    rle_decode,
    rle_encode,
)

MASK_DIGEST_HEADER = "x-mask-digest"
REVISION_HEADER = "x-revision"
CHANGED_VOXELS_HEADER = "x-changed-voxels"


class ClientError(Exception):
    pass


class Unreachable(ClientError):
    pass


class ServerError(ClientError):
    def __init__(self, status: int, name: str, detail: str = ""):
        super().__init__(f"server returned {status} {name}: {detail}")
        self.status = status
        self.name = name
        self.detail = detail


class SessionLost(ClientError):
    """The server no longer knows our token (expired or restarted)."""


class PromptRejected(ClientError):
    def __init__(self, name: str, detail: str = ""):
        super().__init__(f"{name}: {detail}")
        self.name = name
        self.detail = detail


class SyncLoop(ClientError):
    pass


class NoImageLoaded(ClientError):
    pass


class NoActiveSegment(ClientError):
    pass


class IndexOutOfRange(ClientError):
    pass


class ProtocolError(ClientError):
    """Server response contradicts itself (digest does not match payload)."""


@dataclass
class Segment:
    name: str
    mask: Mask3D
    mask_digest: str
    prompt_log: list[Prompt] = field(default_factory=list)


@dataclass(frozen=True)
class SyncReport:
    image_uploaded: bool = False
    mask_uploaded: bool = False


@dataclass(frozen=True)
class PromptResult:
    mask: Mask3D
    mask_digest: str
    revision: int
    changed_voxels: int
    syncs: tuple[SyncReport, ...]
    retried: bool


def read_volume_file(path: str | Path) -> Volume3D:
    """Load a volume from .svol or .nii/.nii.gz, sniffing the format."""
    data = Path(path).read_bytes()
    if data[:4] == b"SVOL":
        return decode_svol(data)
    return parse_nifti(data)


class ClientSession:
    """Single-owner handle on one server session; one operation at a time."""

    def __init__(self, server_url: str, token: str, http: httpx.Client | None = None):
        self.server_url = server_url.rstrip("/")
        self.token = token
        self._http = http if http is not None else httpx.Client(timeout=30.0)
        self._owns_http = http is None
        self.local_image: Volume3D | None = None
        self.local_image_digest: str | None = None
        self.segments: list[Segment] = []
        self.active_segment: int = 0
        self.acked_image_digest: str | None = None
        self.acked_mask_digest: str | None = None
        self.server_revision: int = 0

    # -- plumbing --

    def close(self) -> None:
        if self._owns_http:
            self._http.close()

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        try:
            return self._http.request(method, self.server_url + path, **kwargs)
        except httpx.TransportError as exc:
            raise Unreachable(f"{method} {path}: {exc}") from exc

    @staticmethod
    def _error_body(response: httpx.Response) -> tuple[str, str]:
        try:
            body = response.json()
            return str(body.get("error", "unknown")), str(body.get("detail", ""))
        except ValueError:
            return "unknown", response.text[:200]

    def _check(self, response: httpx.Response) -> httpx.Response:
        if response.status_code < 400:
            return response
        name, detail = self._error_body(response)
        if response.status_code == 404:
            raise SessionLost(f"{name}: {detail}")
        if response.status_code == 422:
            raise PromptRejected(name, detail)
        raise ServerError(response.status_code, name, detail)

    def _session_path(self, suffix: str = "") -> str:
        return f"/v1/session/{self.token}{suffix}"

    # -- local state --

    def active(self) -> Segment:
        if not self.segments:
            raise NoActiveSegment("no segment exists yet")
        return self.segments[self.active_segment]

    def load_image(self, source: Volume3D | str | Path) -> None:
        """Set the working image; drops segments since their dims no longer fit."""
        volume = source if isinstance(source, Volume3D) else read_volume_file(source)
        self.local_image = volume
        self.local_image_digest = digest_volume(volume)
        self.segments = []
        self.active_segment = 0

    def _new_segment(self) -> Segment:
        assert self.local_image is not None
        mask = Mask3D.zeros(self.local_image.dims)
        return Segment(f"Segment {len(self.segments) + 1}", mask, digest_mask(mask))

    # -- synchronization --

    def _sync_image(self) -> bool:
        assert self.local_image is not None
        if self.local_image_digest == self.acked_image_digest:
            return False
        response = self._check(
            self._request(
                "PUT",
                self._session_path("/image"),
                content=encode_svol(self.local_image),
                headers={"content-type": "application/octet-stream"},
            )
        )
        data = response.json()
        if data["digest"] != self.local_image_digest:
            raise ProtocolError(f"server digest {data['digest']} != local {self.local_image_digest}")
        replaced = data["revision"] != self.server_revision
        self.server_revision = data["revision"]
        self.acked_image_digest = data["digest"]
        if replaced:
            # Server reset its mask to all-zero along with the new image.
            self.acked_mask_digest = digest_mask(Mask3D.zeros(self.local_image.dims))
        return True

    def _sync_mask(self) -> bool:
        segment = self.active()
        if segment.mask_digest == self.acked_mask_digest:
            return False
        response = self._check(
            self._request(
                "PUT",
                self._session_path("/mask"),
                content=rle_encode(segment.mask),
                headers={"content-type": "application/octet-stream"},
            )
        )
        data = response.json()
        self.server_revision = data["revision"]
        self.acked_mask_digest = data["digest"]
        return True

    def ensure_synced(self) -> SyncReport:
        """Upload image and/or active mask if the server lacks them; else no-op."""
        if self.local_image is None:
            raise NoImageLoaded("load an image before syncing")
        image_uploaded = self._sync_image()
        mask_uploaded = self._sync_mask() if self.segments else False
        return SyncReport(image_uploaded, mask_uploaded)

    # -- protocol operations --

    def prompt(self, prompt: Prompt) -> PromptResult:
        """Sync if needed, send the prompt, and fold the result into the active segment."""
        if self.local_image is None:
            raise NoImageLoaded("load an image before prompting")
        if not self.segments:
            self.segments.append(self._new_segment())
            self.active_segment = 0
        syncs = [self.ensure_synced()]
        payload = {
            "prompt": prompt_to_dict(prompt),
            "expected_image_digest": self.acked_image_digest,
            "expected_mask_digest": self.acked_mask_digest,
        }
        retried = False
        while True:
            response = self._request("POST", self._session_path("/prompt"), json=payload)
            if response.status_code == 428:
                if retried:
                    name, detail = self._error_body(response)
                    raise SyncLoop(f"second 428 ({name}) after a resync: {detail}")
                retried = True
                name, _ = self._error_body(response)
                if name == "StaleImage":
                    self.acked_image_digest = None
                else:
                    self.acked_mask_digest = None
                syncs.append(self.ensure_synced())
                payload["expected_image_digest"] = self.acked_image_digest
                payload["expected_mask_digest"] = self.acked_mask_digest
                continue
            self._check(response)
            break
        mask = rle_decode(response.content)
        digest = response.headers[MASK_DIGEST_HEADER]
        if digest_mask(mask) != digest:
            raise ProtocolError("returned mask does not match its digest")
        revision = int(response.headers[REVISION_HEADER])
        changed = int(response.headers[CHANGED_VOXELS_HEADER])
        segment = self.active()
        segment.mask = mask
        segment.mask_digest = digest
        segment.prompt_log.append(prompt)
        self.acked_mask_digest = digest
        self.server_revision = revision
        return PromptResult(mask, digest, revision, changed, tuple(syncs), retried)

    def reset_segment(self) -> None:
        """Zero the active segment on the server and locally."""
        segment = self.active()
        response = self._check(self._request("POST", self._session_path("/reset")))
        self.server_revision = response.json()["revision"]
        assert self.local_image is not None
        segment.mask = Mask3D.zeros(self.local_image.dims)
        segment.mask_digest = digest_mask(segment.mask)
        segment.prompt_log.clear()
        self.acked_mask_digest = segment.mask_digest

    def next_segment(self) -> int:
        """Create an empty segment, activate it, and make it the server's input mask."""
        if self.local_image is None:
            raise NoImageLoaded("load an image before creating segments")
        self._sync_image()
        segment = self._new_segment()
        self.segments.append(segment)
        self.active_segment = len(self.segments) - 1
        if self.acked_mask_digest != segment.mask_digest:
            self._sync_mask()
        return self.active_segment

    def switch_segment(self, index: int) -> None:
        """Activate a segment; its mask becomes the input mask on the next sync."""
        if not 0 <= index < len(self.segments):
            raise IndexOutOfRange(f"segment {index} of {len(self.segments)}")
        if index == self.active_segment:
            return
        self.active_segment = index
        self.acked_mask_digest = None

    def fetch_mask(self) -> tuple[Mask3D, str, int]:
        """Download the server's current mask (read-only)."""
        response = self._check(self._request("GET", self._session_path("/mask")))
        mask = rle_decode(response.content)
        return mask, response.headers[MASK_DIGEST_HEADER], int(response.headers[REVISION_HEADER])

    def status(self) -> dict:
        return self._check(self._request("GET", self._session_path())).json()


def connect(
    server_url: str | None = None,
    http: httpx.Client | None = None,
    persist: bool = True,
) -> ClientSession:
    """Create a fresh server session; remembers the URL for later invocations."""
    if server_url is None:
        server_url = load_settings().get("server_url")
    if not server_url:
        raise ClientError("no server URL given and none saved; pass one explicitly")
    server_url = server_url.rstrip("/")
    own_http = http if http is not None else httpx.Client(timeout=30.0)
    try:
        response = own_http.request("POST", server_url + "/v1/session")
    except httpx.TransportError as exc:
        if http is None:
            own_http.close()
        raise Unreachable(f"cannot reach {server_url}: {exc}") from exc
    if response.status_code != 201:
        if http is None:
            own_http.close()
        try:
            body = response.json()
        except ValueError:
            body = {}
        raise ServerError(response.status_code, str(body.get("error", "unknown")), str(body.get("detail", "")))
    if persist:
        save_settings(server_url=server_url)
    session = ClientSession(server_url, response.json()["token"], own_http)
    session._owns_http = http is None
    return session
