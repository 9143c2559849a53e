"""Pluggable model clients: contracts, offline replay fixtures, and an HTTP client
for OpenAI-compatible chat endpoints.

Credentials come only from the environment (``CULGEN_API_KEY`` or ``OPENAI_API_KEY``;
``CULGEN_API_BASE`` overrides the endpoint).
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import NotFoundError, TransportError

log = logging.getLogger(__name__)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def image_digest(image) -> str:
    """Content hash of an image reference (file bytes, array bytes, or the string itself)."""
    if isinstance(image, np.ndarray):
        return hashlib.sha256(np.ascontiguousarray(image).tobytes()).hexdigest()
    path = Path(str(image))
    if path.is_file():
        return hashlib.sha256(path.read_bytes()).hexdigest()
    return sha256_text(str(image))


class VLMClient(Protocol):
    def query(self, image, instruction: str) -> str: ...


class TextClient(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass
class JudgeRequest:
    prompt: str
    modality: str  # "MLLM" or "LLM"
    images: list = field(default_factory=list)
    descriptions: list = field(default_factory=list)
    values: list = field(default_factory=list)  # attribute values in presentation order; mocks only


class JudgeClient(Protocol):
    id: str

    def judge(self, request: JudgeRequest) -> str: ...


class FixtureVLMClient:
    """Replays recorded ``{instruction_sha256, image_sha256, response}`` triples."""

    def __init__(self, records):
        self._table = {(r["instruction_sha256"], r["image_sha256"]): r["response"] for r in records}

    @classmethod
    def load(cls, path) -> "FixtureVLMClient":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([json.loads(line) for line in lines if line.strip()])

    def query(self, image, instruction: str) -> str:
        key = (sha256_text(instruction), image_digest(image))
        try:
            return self._table[key]
        except KeyError:
            raise NotFoundError(f"no recorded response for image {image} (sha256 {key[1][:12]}...)") from None


class RecordingVLMClient:
    """Wraps a live client and appends every exchange to a JSON-lines fixture file."""

    def __init__(self, inner: VLMClient, path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def query(self, image, instruction: str) -> str:
        response = self.inner.query(image, instruction)
        record = {"instruction_sha256": sha256_text(instruction), "image_sha256": image_digest(image),
                  "image": str(image), "response": response}
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
        return response


def with_retries(fn, attempts: int = 3, backoff: float = 0.5):
    """Call ``fn()`` retrying on TransportError with exponential backoff."""
    for attempt in range(1, attempts + 1):
        try:
            return fn()
        except TransportError:
            if attempt == attempts:
                raise
            time.sleep(backoff * 2 ** (attempt - 1))


def _data_url(image) -> str:
    data = Path(str(image)).read_bytes()
    mime = "image/png" if str(image).lower().endswith(".png") else "image/jpeg"
    return f"data:{mime};base64,{base64.b64encode(data).decode('ascii')}"


class OpenAIChatClient:
    """Minimal chat-completions client usable as VLM, judge, text model or text editor."""

    def __init__(self, model: str, base_url: str | None = None, api_key: str | None = None,
                 timeout: float = 120.0, transport=None):
        import httpx

        self.model = model
        self.id = model
        self.base_url = (base_url or os.environ.get("CULGEN_API_BASE") or "https://api.openai.com/v1").rstrip("/")
        key = api_key or os.environ.get("CULGEN_API_KEY") or os.environ.get("OPENAI_API_KEY")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _chat(self, content) -> str:
        import httpx

        body = {"model": self.model, "messages": [{"role": "user", "content": content}], "temperature": 0}
        try:
            resp = self._http.post(f"{self.base_url}/chat/completions", json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"{self.model}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"{self.model}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise TransportError(f"{self.model}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise TransportError(f"{self.model}: malformed response ({exc})") from exc

    def complete(self, prompt: str) -> str:
        return self._chat(prompt)

    def query(self, image, instruction: str) -> str:
        return self._chat([{"type": "text", "text": instruction},
                           {"type": "image_url", "image_url": {"url": _data_url(image)}}])

    def judge(self, request: JudgeRequest) -> str:
        if request.modality == "MLLM":
            parts = [{"type": "text", "text": request.prompt}]
            parts += [{"type": "image_url", "image_url": {"url": _data_url(img)}} for img in request.images]
            return self._chat(parts)
        return self._chat(request.prompt)
