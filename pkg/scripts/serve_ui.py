#!/usr/bin/env python3
"""Serve the built browser UI from frontend/ on a local port.

    cd frontend && npm install && npm run build
    python scripts/serve_ui.py [port]

The API server runs separately (promptseg serve) and allows cross-origin
requests, so the UI can be hosted anywhere static files work.
"""

import sys
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

root = Path(__file__).parent.parent / "frontend"
port = int(sys.argv[1]) if len(sys.argv) > 1 else 8080

if not (root / "dist" / "main.js").exists():
    print("frontend/dist is missing; run `npm run build` in frontend/ first", file=sys.stderr)
    sys.exit(1)

handler = partial(SimpleHTTPRequestHandler, directory=str(root))
print(f"serving {root} on http://127.0.0.1:{port}")
ThreadingHTTPServer(("127.0.0.1", port), handler).serve_forever()
