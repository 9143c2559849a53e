"""Trainable adapter maths: linear image projection and the two cross-attention stages.

Array conventions are row-major: a sequence is an ``(L, d)`` array and weights
multiply from the right, so ``queries @ w_q`` has shape ``(L, d_attn)``.
Every forward helper returns ``(output, cache)`` and has a matching
``*_backward`` that consumes the cache.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .embeddings import Embedding
from .errors import InvalidInputError

CHECKPOINT_FORMAT = "culgen-adapter/1"


def _check_matrix(name, arr, rows=None, cols=None):
    arr = np.array(arr, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a matrix, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows or cols is not None and arr.shape[1] != cols:
        raise InvalidInputError(f"{name} has shape {arr.shape}, expected ({rows}, {cols})")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


@dataclass(eq=False)
class CrossAttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    n_heads: int = 1

    def __post_init__(self):
        self.w_q = _check_matrix("w_q", self.w_q)
        d_in, d_attn = self.w_q.shape
        self.w_k = _check_matrix("w_k", self.w_k, d_in, d_attn)
        self.w_v = _check_matrix("w_v", self.w_v, d_in, d_attn)
        self.w_o = _check_matrix("w_o", self.w_o, d_attn)
        if self.n_heads < 1 or d_attn % self.n_heads:
            raise InvalidInputError(f"d_attn={d_attn} is not divisible by n_heads={self.n_heads}")

    @property
    def d_in(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_attn(self) -> int:
        return self.w_q.shape[1]

    @property
    def d_out(self) -> int:
        return self.w_o.shape[1]

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.d_attn // self.n_heads)

    @classmethod
    def init(cls, d_in, d_out=None, d_attn=None, n_heads=1, rng=None):
        d_out = d_in if d_out is None else d_out
        d_attn = d_in if d_attn is None else d_attn
        rng = np.random.default_rng(0) if rng is None else rng
        s_in, s_attn = 1.0 / np.sqrt(d_in), 1.0 / np.sqrt(d_attn)
        return cls(
            rng.normal(0.0, s_in, (d_in, d_attn)),
            rng.normal(0.0, s_in, (d_in, d_attn)),
            rng.normal(0.0, s_in, (d_in, d_attn)),
            rng.normal(0.0, s_attn, (d_attn, d_out)),
            n_heads,
        )

    @classmethod
    def identity(cls, d):
        eye = np.eye(d)
        return cls(eye, eye, eye, eye)

    def arrays(self) -> dict:
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v, "w_o": self.w_o}


@dataclass(eq=False)
class LinearProjector:
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w = _check_matrix("w", self.w)
        self.b = np.array(self.b, dtype=np.float64, copy=True).reshape(-1)
        if self.b.shape[0] != self.w.shape[1]:
            raise InvalidInputError(f"bias length {self.b.shape[0]} != output dim {self.w.shape[1]}")

    @property
    def d_img(self) -> int:
        return self.w.shape[0]

    @property
    def d_text(self) -> int:
        return self.w.shape[1]

    @classmethod
    def init(cls, d_img, d_text, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        return cls(rng.normal(0.0, 1.0 / np.sqrt(d_img), (d_img, d_text)), np.zeros(d_text))

    def arrays(self) -> dict:
        return {"w": self.w, "b": self.b}


def attend(x, c, p: CrossAttentionParams):
    """Cross-attention from query rows ``x`` onto context rows ``c``."""
    if x.shape[1] != p.d_in or c.shape[1] != p.d_in:
        raise InvalidInputError(
            f"cross-attention expects d_in={p.d_in}, got queries dim {x.shape[1]} and context dim {c.shape[1]}"
        )
    q, k, v = x @ p.w_q, c @ p.w_k, c @ p.w_v
    hd = p.d_attn // p.n_heads
    heads, weights = [], []
    for h in range(p.n_heads):
        sl = slice(h * hd, (h + 1) * hd)
        o, w = kernels.attention_forward(q[:, sl], k[:, sl], v[:, sl], p.scale)
        heads.append(o)
        weights.append(w)
    o_cat = heads[0] if p.n_heads == 1 else np.concatenate(heads, axis=1)
    return o_cat @ p.w_o, (x, c, q, k, v, weights, o_cat)


def attend_backward(dout, cache, p: CrossAttentionParams):
    """Return ``(dx, dc, grads)`` where ``grads`` is keyed like ``p.arrays()``."""
    x, c, q, k, v, weights, o_cat = cache
    d_o_cat = dout @ p.w_o.T
    hd = p.d_attn // p.n_heads
    dq, dk, dv = np.empty_like(q), np.empty_like(k), np.empty_like(v)
    for h in range(p.n_heads):
        sl = slice(h * hd, (h + 1) * hd)
        dq[:, sl], dk[:, sl], dv[:, sl] = kernels.attention_backward(
            d_o_cat[:, sl], weights[h], q[:, sl], k[:, sl], v[:, sl], p.scale
        )
    grads = {"w_q": x.T @ dq, "w_k": c.T @ dk, "w_v": c.T @ dv, "w_o": o_cat.T @ dout}
    dx = dq @ p.w_q.T
    dc = dk @ p.w_k.T + dv @ p.w_v.T
    return dx, dc, grads


def attention_weights(x, c, p: CrossAttentionParams) -> list:
    """Per-head softmax weight matrices (rows sum to one)."""
    return attend(x, c, p)[1][5]


def project(x, lp: LinearProjector):
    if x.shape[1] != lp.d_img:
        raise InvalidInputError(f"projector expects image dim {lp.d_img}, got {x.shape[1]}")
    return x @ lp.w + lp.b, x


def project_backward(dy, cache, lp: LinearProjector):
    x = cache
    return dy @ lp.w.T, {"w": x.T @ dy, "b": dy.sum(axis=0)}


def cross_attention(queries: Embedding, context: Embedding, p: CrossAttentionParams) -> Embedding:
    out, _ = attend(queries.rows, context.rows, p)
    return Embedding(out, "cross-attention")


def project_image(img: Embedding, lp: LinearProjector) -> Embedding:
    out, _ = project(img.rows, lp)
    return Embedding(out, "projected-image")


@dataclass(eq=False)
class Adapter:
    """The trainable condition-scheduler state: CA1, CA2 and the linear image projector.

    CA1 queries are the cultural rows and its context the reason rows; CA2 takes the
    CA1 output as queries and the projected image as context. Neither stage has a
    residual connection or normalization.
    """

    ca1: CrossAttentionParams
    ca2: CrossAttentionParams
    proj: LinearProjector
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, d_text, d_img, seed=0, n_heads=1, d_attn=None):
        rng = np.random.default_rng(seed)
        return cls(
            CrossAttentionParams.init(d_text, d_text, d_attn, n_heads, rng),
            CrossAttentionParams.init(d_text, d_text, d_attn, n_heads, rng),
            LinearProjector.init(d_img, d_text, rng),
        )

    @property
    def d_text(self) -> int:
        return self.proj.d_text

    @property
    def d_img(self) -> int:
        return self.proj.d_img

    def named_arrays(self) -> dict:
        out = {}
        for prefix, part in (("ca1", self.ca1), ("ca2", self.ca2), ("proj", self.proj)):
            for name, arr in part.arrays().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def copy(self) -> "Adapter":
        return Adapter(
            CrossAttentionParams(*(a.copy() for a in self.ca1.arrays().values()), self.ca1.n_heads),
            CrossAttentionParams(*(a.copy() for a in self.ca2.arrays().values()), self.ca2.n_heads),
            LinearProjector(self.proj.w.copy(), self.proj.b.copy()),
            dict(self.meta),
        )

    def apply_update(self, deltas: dict):
        """Add ``deltas`` (keyed like :meth:`named_arrays`) in place."""
        arrays = self.named_arrays()
        for key, delta in deltas.items():
            arrays[key] += delta

    def projected_block(self, cultural, reason, image):
        """Array-level forward of the cascade; returns ``(rows, cache)``."""
        pc, c1 = attend(cultural, reason, self.ca1)
        pim, cp = project(image, self.proj)
        out, c2 = attend(pc, pim, self.ca2)
        return out, (c1, cp, c2)

    def projected_block_backward(self, dout, cache) -> dict:
        c1, cp, c2 = cache
        dpc, dpim, g2 = attend_backward(dout, c2, self.ca2)
        _, gp = project_backward(dpim, cp, self.proj)
        _, _, g1 = attend_backward(dpc, c1, self.ca1)
        grads = {f"ca1.{k}": v for k, v in g1.items()}
        grads.update({f"ca2.{k}": v for k, v in g2.items()})
        grads.update({f"proj.{k}": v for k, v in gp.items()})
        return grads

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.named_arrays().items()}


def build_projected_image(cultural: Embedding, reason: Embedding, image: Embedding,
                          ca1: CrossAttentionParams, ca2: CrossAttentionParams,
                          lp: LinearProjector) -> Embedding:
    if cultural.dim != lp.d_text or reason.dim != lp.d_text:
        raise InvalidInputError(
            f"cultural/reason dims ({cultural.dim}, {reason.dim}) must equal text dim {lp.d_text}"
        )
    out, _ = Adapter(ca1, ca2, lp).projected_block(cultural.rows, reason.rows, image.rows)
    return Embedding(out, "projected-image")


def save_checkpoint(adapter: Adapter, path) -> Path:
    """Write the adapter as a flat ``.npz`` of named arrays plus a JSON ``__meta__`` entry.

    Keys: ``ca1.w_q ca1.w_k ca1.w_v ca1.w_o ca2.w_q ca2.w_k ca2.w_v ca2.w_o proj.w proj.b``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = adapter.named_arrays()
    meta = {
        "format": CHECKPOINT_FORMAT,
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "n_heads": {"ca1": adapter.ca1.n_heads, "ca2": adapter.ca2.n_heads},
        "residual": False,
        "layer_norm": False,
        **adapter.meta,
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path) -> Adapter:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise InvalidInputError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        for key, shape in meta["shapes"].items():
            if list(data[key].shape) != shape:
                raise InvalidInputError(f"{path}: {key} has shape {data[key].shape}, metadata says {shape}")
        heads = meta.get("n_heads", {})
        ca1 = CrossAttentionParams(*(data[f"ca1.{k}"] for k in ("w_q", "w_k", "w_v", "w_o")), heads.get("ca1", 1))
        ca2 = CrossAttentionParams(*(data[f"ca2.{k}"] for k in ("w_q", "w_k", "w_v", "w_o")), heads.get("ca2", 1))
        lp = LinearProjector(data["proj.w"], data["proj.b"])
    extra = {k: v for k, v in meta.items() if k not in {"format", "shapes", "n_heads", "residual", "layer_norm"}}
    return Adapter(ca1, ca2, lp, extra)
