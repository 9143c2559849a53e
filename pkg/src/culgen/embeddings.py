"""Embedding sequences, action-reason statements and the deterministic toy encoders."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageReadError, InvalidInputError

ImageRef = Union[str, Path, np.ndarray]


class Embedding:
    """A length-L sequence of d-dimensional rows tagged with the encoder that produced it.

    The row array is copied on construction and marked read-only.
    """

    __slots__ = ("rows", "encoder_id")

    def __init__(self, rows, encoder_id: str = ""):
        arr = np.array(rows, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"embedding rows must be a non-empty (L, d) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("embedding rows contain non-finite entries")
        arr.flags.writeable = False
        self.rows = arr
        self.encoder_id = encoder_id

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def length(self) -> int:
        return self.rows.shape[0]

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.encoder_id == other.encoder_id and np.array_equal(self.rows, other.rows)

    __hash__ = None

    def __repr__(self):
        return f"Embedding(L={self.length}, dim={self.dim}, encoder_id={self.encoder_id!r})"


@dataclass(frozen=True)
class ActionReason:
    action: str
    reason: str

    def __post_init__(self):
        if not self.action.strip() or not self.reason.strip():
            raise InvalidInputError("action and reason must both be non-empty")

    def render(self) -> str:
        return f"I should {self.action} because {self.reason}"

    def __str__(self):
        return self.render()

    @classmethod
    def parse(cls, statement: str) -> "ActionReason":
        text = statement.strip()
        prefix = "I should "
        if not text.startswith(prefix) or " because " not in text:
            raise InvalidInputError(f"not an action-reason statement: {statement!r}")
        action, reason = text[len(prefix):].split(" because ", 1)
        return cls(action, reason)


class TextEncoder(Protocol):
    id: str
    output_dim: int

    def encode(self, text: str) -> Embedding: ...


class ImageEncoder(Protocol):
    id: str
    output_dim: int

    def encode(self, image: ImageRef) -> Embedding: ...


def tokenize(text: str) -> list[str]:
    """Whitespace tokenizer used by the toy text encoder (lower-cased)."""
    return text.lower().split()


def _seeded_rng(*parts) -> np.random.Generator:
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


class HashTextEncoder:
    """Maps every token to a fixed pseudo-random vector derived from a hash of the token.

    With ``per_token=False`` the token rows are mean-pooled into one row.
    """

    def __init__(self, output_dim: int = 16, seed: int = 0, per_token: bool = True):
        if output_dim < 1:
            raise InvalidInputError("output_dim must be positive")
        self.output_dim = output_dim
        self.seed = seed
        self.per_token = per_token
        self.id = f"hash-text-d{output_dim}-s{seed}" + ("" if per_token else "-pooled")

    def token_vector(self, token: str) -> np.ndarray:
        rng = _seeded_rng("hash-text", self.seed, token)
        return rng.standard_normal(self.output_dim) / np.sqrt(self.output_dim)

    def encode(self, text: str) -> Embedding:
        tokens = tokenize(text)
        if not tokens:
            raise InvalidInputError("cannot encode empty text")
        rows = np.stack([self.token_vector(t) for t in tokens])
        if not self.per_token:
            rows = rows.mean(axis=0, keepdims=True)
        return Embedding(rows, self.id)


def load_image(image: ImageRef) -> np.ndarray:
    """Return an (H, W, 3) float64 array with values in [0, 1]."""
    if isinstance(image, np.ndarray):
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InvalidInputError(f"image array must be (H, W, 3), got {arr.shape}")
        return arr
    path = Path(image)
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageReadError(path, str(exc)) from exc


def _cell_bounds(n: int, parts: int) -> list[tuple[int, int]]:
    return [((i * n) // parts, ((i + 1) * n) // parts) for i in range(parts)]


class PixelStatsImageEncoder:
    """One row per grid cell: a fixed linear mix of the cell's channel means and stds.

    The mix has no bias, so an all-black image encodes to zeros. Images smaller
    than the grid are upsampled by pixel repetition first.
    """

    n_stats = 6

    def __init__(self, output_dim: int = 16, grid: int = 2, seed: int = 0):
        if output_dim < 1 or grid < 1:
            raise InvalidInputError("output_dim and grid must be positive")
        self.output_dim = output_dim
        self.grid = grid
        self.seed = seed
        self.id = f"pixel-stats-d{output_dim}-g{grid}-s{seed}"
        mix = _seeded_rng("pixel-stats", seed, output_dim).standard_normal((self.n_stats, output_dim))
        mix.flags.writeable = False
        self.mixing = mix

    def cell_stats(self, pixels: np.ndarray) -> np.ndarray:
        h, w, _ = pixels.shape
        if h < self.grid or w < self.grid:
            pixels = np.repeat(np.repeat(pixels, -(-self.grid // h), axis=0), -(-self.grid // w), axis=1)
            h, w, _ = pixels.shape
        stats = []
        for r0, r1 in _cell_bounds(h, self.grid):
            for c0, c1 in _cell_bounds(w, self.grid):
                cell = pixels[r0:r1, c0:c1].reshape(-1, 3)
                stats.append(np.concatenate([cell.mean(axis=0), cell.std(axis=0)]))
        return np.stack(stats)

    def encode(self, image: ImageRef) -> Embedding:
        return Embedding(self.cell_stats(load_image(image)) @ self.mixing, self.id)


def encode_text(text: str, enc: TextEncoder) -> Embedding:
    if not text or not text.strip():
        raise InvalidInputError("cannot encode empty text")
    return enc.encode(text)


def encode_image(image: ImageRef, enc: ImageEncoder) -> Embedding:
    return enc.encode(image)


def encode_components(components: Sequence[str], enc: TextEncoder, per_component: bool = False) -> Embedding:
    """Encode cultural components as one comma-joined string, or one call per component."""
    items = [c.strip() for c in components if c and c.strip()]
    if not items:
        raise InvalidInputError("no cultural components to encode")
    if per_component:
        return concat_sequences([encode_text(c, enc) for c in items])
    return encode_text(", ".join(items), enc)


def concat_sequences(parts: Sequence[Embedding]) -> Embedding:
    """Concatenate along the sequence axis, preserving argument order."""
    parts = list(parts)
    if not parts:
        raise InvalidInputError("concat_sequences needs at least one embedding")
    if len(parts) == 1:
        return parts[0]
    dim = parts[0].dim
    bad = [i for i, p in enumerate(parts) if p.dim != dim]
    if bad:
        dims = {i: parts[i].dim for i in bad}
        raise InvalidInputError(f"dim mismatch: parts {bad} differ from part 0 (dim {dim}): {dims}")
    ids = []
    for p in parts:
        if p.encoder_id not in ids:
            ids.append(p.encoder_id)
    return Embedding(np.concatenate([p.rows for p in parts], axis=0), "+".join(ids))
