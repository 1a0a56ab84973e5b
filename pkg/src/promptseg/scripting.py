"""Headless replay of interactive sessions from a script file.

A prompt script is a JSON document:

    {"steps": [
        {"op": "load_image", "path": "volume.nii.gz"},
        {"op": "prompt", "kind": "point", "polarity": "positive", "coord": [4, 5, 6]},
        {"op": "next_segment"},
        {"op": "switch_segment", "index": 0},
        {"op": "reset"},
        {"op": "expect_digest", "digest": "<64 hex chars>"}
    ]}

The first step must load an image. ``expect_digest`` compares the active
segment's mask digest and aborts the run with a diff report on mismatch,
which makes recorded sessions replayable as regression checks. See
scripts/promptscript.schema.json for the schema and scripts/sample_*.json
for worked examples.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import httpx

from .client import ClientError, ClientSession, connect
from .segmenter import InvalidPrompt, Prompt, prompt_from_dict

DIGEST_RE = re.compile(r"^[0-9a-f]{64}$")

STEP_OPS = ("load_image", "prompt", "reset", "next_segment", "switch_segment", "expect_digest")


class ScriptError(ClientError):
    pass


class ReplayMismatch(ClientError):
    def __init__(self, step_index: int, expected: str, actual: str, segment_name: str, voxels_set: int):
        report = (
            f"digest mismatch at step {step_index} (segment {segment_name!r}):\n"
            f"  expected {expected}\n"
            f"  actual   {actual}  ({voxels_set} voxels set)"
        )
        super().__init__(report)
        self.step_index = step_index
        self.expected = expected
        self.actual = actual


@dataclass(frozen=True)
class Step:
    op: str
    path: str | None = None
    prompt: Prompt | None = None
    index: int | None = None
    digest: str | None = None


@dataclass(frozen=True)
class ReplayReport:
    steps_run: int
    segment_digests: tuple[tuple[str, str], ...]  # (segment name, mask digest)


def parse_script(text: str) -> list[Step]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScriptError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("steps"), list):
        raise ScriptError('script must be an object with a "steps" array')
    raw_steps = doc["steps"]
    if not raw_steps:
        raise ScriptError("script has no steps")
    steps = []
    for i, raw in enumerate(raw_steps):
        if not isinstance(raw, dict) or "op" not in raw:
            raise ScriptError(f'step {i}: each step needs an "op" field')
        op = raw["op"]
        if op == "load_image":
            path = raw.get("path")
            if not isinstance(path, str) or not path:
                raise ScriptError(f"step {i}: load_image needs a path")
            steps.append(Step(op, path=path))
        elif op == "prompt":
            body = {k: v for k, v in raw.items() if k != "op"}
            try:
                steps.append(Step(op, prompt=prompt_from_dict(body)))
            except InvalidPrompt as exc:
                raise ScriptError(f"step {i}: {exc}") from exc
        elif op in ("reset", "next_segment"):
            steps.append(Step(op))
        elif op == "switch_segment":
            index = raw.get("index")
            if not isinstance(index, int) or isinstance(index, bool) or index < 0:
                raise ScriptError(f"step {i}: switch_segment needs a non-negative index")
            steps.append(Step(op, index=index))
        elif op == "expect_digest":
            digest = raw.get("digest")
            if not isinstance(digest, str) or not DIGEST_RE.match(digest):
                raise ScriptError(f"step {i}: expect_digest needs 64 lowercase hex chars")
            steps.append(Step(op, digest=digest))
        else:
            raise ScriptError(f"step {i}: unknown op {op!r} (one of {', '.join(STEP_OPS)})")
    if steps[0].op != "load_image":
        raise ScriptError("first step must be load_image")
    return steps


def load_script(path: str | Path) -> list[Step]:
    return parse_script(Path(path).read_text())


def run_script(
    steps: list[Step],
    server_url: str,
    base_dir: str | Path = ".",
    http: httpx.Client | None = None,
) -> ReplayReport:
    """Execute a parsed script against a server; returns final per-segment digests."""
    base = Path(base_dir)
    session = connect(server_url, http=http, persist=False)
    try:
        for i, step in enumerate(steps):
            if step.op == "load_image":
                path = Path(step.path)
                session.load_image(path if path.is_absolute() else base / path)
            elif step.op == "prompt":
                session.prompt(step.prompt)
            elif step.op == "reset":
                session.reset_segment()
            elif step.op == "next_segment":
                session.next_segment()
            elif step.op == "switch_segment":
                session.switch_segment(step.index)
            elif step.op == "expect_digest":
                segment = session.active()
                if segment.mask_digest != step.digest:
                    raise ReplayMismatch(i, step.digest, segment.mask_digest, segment.name, segment.mask.count())
        return ReplayReport(len(steps), tuple((s.name, s.mask_digest) for s in session.segments))
    finally:
        session.close()
