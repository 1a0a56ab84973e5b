"""Per-user persisted settings (currently just the server URL).

Stored as key=value lines in the platform config directory so the URL
survives across CLI invocations. ``PROMPTSEG_CONFIG_DIR`` overrides the
location, which tests use to stay inside a sandbox.
"""

from __future__ import annotations

import os
from pathlib import Path

CONFIG_FILE = "config"


def config_dir() -> Path:
    override = os.environ.get("PROMPTSEG_CONFIG_DIR")
    if override:
        return Path(override)
    xdg = os.environ.get("XDG_CONFIG_HOME")
    base = Path(xdg) if xdg else Path.home() / ".config"
    return base / "promptseg"


def load_settings() -> dict[str, str]:
    path = config_dir() / CONFIG_FILE
    if not path.exists():
        return {}
    settings = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        settings[key.strip()] = value.strip()
    return settings


def save_settings(**updates: str) -> None:
    settings = load_settings()
    settings.update(updates)
    path = config_dir() / CONFIG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k} = {v}\n" for k, v in sorted(settings.items())))
