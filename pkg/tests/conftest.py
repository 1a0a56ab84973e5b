from __future__ import annotations

import socket
import threading
import time

import httpx
import numpy as np
import pytest
import uvicorn
from fastapi.testclient import TestClient

from promptseg.segmenter import ReferenceSegmenter, SegmenterParams
from promptseg.server import ServerConfig, create_app
from promptseg.volume import Mask3D, Volume3D

DTYPES = ("U8", "I16", "U16", "F32")


def make_volume(dims, values, dtype="U8", spacing=(1.0, 1.0, 1.0)) -> Volume3D:
    return Volume3D(tuple(dims), tuple(spacing), dtype, np.asarray(values))


def random_volume(rng: np.random.Generator, max_dim=16, dtype=None, spacing=None) -> Volume3D:
    dims = tuple(int(d) for d in rng.integers(1, max_dim + 1, size=3))
    n = dims[0] * dims[1] * dims[2]
    dtype = dtype or DTYPES[rng.integers(0, len(DTYPES))]
    if dtype == "U8":
        vox = rng.integers(0, 256, size=n, dtype=np.uint8)
    elif dtype == "I16":
        vox = rng.integers(-(2**15), 2**15, size=n).astype(np.int16)
    elif dtype == "U16":
        vox = rng.integers(0, 2**16, size=n, dtype=np.uint16)
    else:
        vox = rng.standard_normal(n).astype(np.float32) * 100
    if spacing is None:
        spacing = tuple(float(np.float32(s)) for s in rng.uniform(0.1, 5.0, size=3))
    return Volume3D(dims, spacing, dtype, vox)


def random_mask(rng: np.random.Generator, dims=None, max_dim=16) -> Mask3D:
    if dims is None:
        dims = tuple(int(d) for d in rng.integers(1, max_dim + 1, size=3))
    n = dims[0] * dims[1] * dims[2]
    return Mask3D(dims, rng.integers(0, 2, size=n, dtype=np.uint8))


@pytest.fixture(autouse=True)
def _isolated_user_dirs(tmp_path, monkeypatch):
    """Keep CLI/SDK persistence away from the real home directory."""
    monkeypatch.setenv("PROMPTSEG_CONFIG_DIR", str(tmp_path / "config"))
    monkeypatch.setenv("PROMPTSEG_STATE_DIR", str(tmp_path / "state"))


@pytest.fixture
def app():
    """In-process server with the tolerance-0 reference backend."""
    return create_app(
        ServerConfig(tolerance=0.0, radius=None),
        backend=ReferenceSegmenter(SegmenterParams(tolerance=0.0, radius=None)),
    )


@pytest.fixture
def tc(app):
    with TestClient(app) as client:
        yield client


class LiveServer:
    """Real uvicorn server on a local socket, runnable from tests."""

    def __init__(self, config: ServerConfig | None = None, backend=None):
        self.config = config or ServerConfig(tolerance=0.0)
        self.config.host = "127.0.0.1"
        if not getattr(self.config, "port", 0):
            self.config.port = 0
        if self.config.port == 1527:
            self.config.port = 0
        if self.config.port == 0:
            self.config.port = free_port()
        self.app = create_app(self.config, backend=backend)
        self._uv = uvicorn.Server(
            uvicorn.Config(self.app, host=self.config.host, port=self.config.port, log_level="error")
        )
        self._thread = threading.Thread(target=self._uv.run, daemon=True)

    @property
    def url(self) -> str:
        return f"http://{self.config.host}:{self.config.port}"

    def start(self) -> "LiveServer":
        self._thread.start()
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            try:
                if httpx.get(self.url + "/v1/health", timeout=1.0).status_code == 200:
                    return self
            except httpx.TransportError:
                time.sleep(0.02)
        raise RuntimeError("server did not come up")

    def stop(self) -> None:
        self._uv.should_exit = True
        self._thread.join(timeout=10)

    def __enter__(self) -> "LiveServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="session")
def live_server():
    with LiveServer() as server:
        yield server
