#!/usr/bin/env python3
"""Self-contained demo: boot a server, replay a bundled script, print digests.

    python scripts/run_demo.py [script.json]
"""

import sys
import threading
import time
from pathlib import Path

import httpx
import uvicorn

from promptseg.demo import demo_volume
from promptseg.scripting import load_script, run_script
from promptseg.server import ServerConfig, create_app
from promptseg.volume import encode_svol

HERE = Path(__file__).parent
PORT = 17527


def main() -> int:
    script_path = Path(sys.argv[1]) if len(sys.argv) > 1 else HERE / "sample_two_segments.json"
    volume_path = HERE / "demo_volume.svol"
    if not volume_path.exists():
        volume_path.write_bytes(encode_svol(demo_volume()))
        print(f"wrote {volume_path}")

    config = ServerConfig(port=PORT)
    server = uvicorn.Server(uvicorn.Config(create_app(config), host=config.host, port=config.port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    url = f"http://{config.host}:{config.port}"
    for _ in range(200):
        try:
            if httpx.get(url + "/v1/health", timeout=1.0).status_code == 200:
                break
        except httpx.TransportError:
            time.sleep(0.05)
    else:
        print("server did not start", file=sys.stderr)
        return 1

    try:
        report = run_script(load_script(script_path), url, base_dir=script_path.parent)
        print(f"replayed {report.steps_run} steps from {script_path.name}")
        for name, digest in report.segment_digests:
            print(f"  {name}: {digest}")
        return 0
    finally:
        server.should_exit = True
        thread.join(timeout=5)


if __name__ == "__main__":
    sys.exit(main())
