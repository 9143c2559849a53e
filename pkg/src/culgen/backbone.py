"""Toy rectified-flow backbone: straight-path noising, velocity targets, a small
cross-attention denoiser and a seeded Euler sampler driven by the condition schedule.

Noise level ``tau`` runs from 1 (pure noise) to 0 (clean); ``x_tau = (1 - tau) x0 + tau eps``
and the velocity target is ``eps - x0``. Sampling step ``i`` integrates from
``tau = 1 - i/T`` to ``1 - (i + 1)/T``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .embeddings import ImageRef, load_image
from .errors import ConfigurationError, InvalidInputError
from .optim import Adam
from .projector import CrossAttentionParams, attend, attend_backward
from .scheduler import AblationFlags, ConditionBundle, ScheduleConfig, assemble, check_bundle, stage_of

log = logging.getLogger(__name__)

BACKBONE_FORMAT = "culgen-backbone/1"


def _check_tau(tau):
    if not 0.0 <= tau <= 1.0:
        raise InvalidInputError(f"tau={tau} outside [0, 1]")


def _check_shapes(a, b):
    if np.shape(a) != np.shape(b):
        raise InvalidInputError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def add_noise(x0, eps, tau):
    _check_tau(tau)
    _check_shapes(x0, eps)
    return (1.0 - tau) * x0 + tau * eps


def velocity_target(x0, eps):
    _check_shapes(x0, eps)
    return eps - x0


def euler_step(x, velocity, tau, tau_next):
    return x + (tau_next - tau) * velocity


@dataclass(frozen=True)
class DenoiserConfig:
    channels: int = 4
    height: int = 8
    width: int = 8
    cond_dim: int = 16
    model_dim: int = 32
    hidden_dim: int = 64
    n_blocks: int = 2
    time_features: int = 8

    @property
    def latent_shape(self) -> tuple:
        return (self.channels, self.height, self.width)

    @property
    def n_tokens(self) -> int:
        return self.height * self.width


def time_features(tau: float, n: int) -> np.ndarray:
    freqs = np.pi * 2.0 ** np.arange(n // 2)
    return np.concatenate([np.sin(freqs * tau), np.cos(freqs * tau)])


class ToyDenoiser:
    """Latent tokens attend to the condition sequence; two residual blocks of
    cross-attention followed by a tanh MLP, then a linear read-out to velocity.

    Any condition length ``L >= 1`` is accepted.
    """

    def __init__(self, config: DenoiserConfig, params: dict):
        self.config = config
        self.params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
        expected = self._shapes(config)
        for key, shape in expected.items():
            if key not in self.params or self.params[key].shape != shape:
                got = self.params[key].shape if key in self.params else None
                raise InvalidInputError(f"backbone parameter {key}: expected shape {shape}, got {got}")

    @staticmethod
    def _shapes(cfg: DenoiserConfig) -> dict:
        d, hdim = cfg.model_dim, cfg.hidden_dim
        shapes = {
            "w_in": (cfg.channels, d), "b_in": (d,), "pos": (cfg.n_tokens, d),
            "w_t": (cfg.time_features, d), "w_c": (cfg.cond_dim, d), "b_c": (d,),
            "w_out": (d, cfg.channels), "b_out": (cfg.channels,),
        }
        for k in range(cfg.n_blocks):
            shapes.update({f"blk{k}.attn.{n}": (d, d) for n in ("w_q", "w_k", "w_v", "w_o")})
            shapes.update({f"blk{k}.mlp.w1": (d, hdim), f"blk{k}.mlp.b1": (hdim,),
                           f"blk{k}.mlp.w2": (hdim, d), f"blk{k}.mlp.b2": (d,)})
        return shapes

    @classmethod
    def init(cls, config: DenoiserConfig = DenoiserConfig(), seed: int = 0) -> "ToyDenoiser":
        rng = np.random.default_rng(seed)
        params = {}
        for key, shape in cls._shapes(config).items():
            if len(shape) == 1:
                params[key] = np.zeros(shape)
            elif key == "pos":
                params[key] = rng.normal(0.0, 0.5, shape)
            else:
                params[key] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
        return cls(config, params)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def checksum(self) -> str:
        h = hashlib.sha256()
        for key in sorted(self.params):
            h.update(key.encode())
            h.update(np.ascontiguousarray(self.params[key]).tobytes())
        return h.hexdigest()

    def _attn(self, k: int) -> CrossAttentionParams:
        p = self.params
        return CrossAttentionParams(*(p[f"blk{k}.attn.{n}"] for n in ("w_q", "w_k", "w_v", "w_o")))

    def __call__(self, x, tau, cond):
        return self.forward(x, tau, cond)

    def forward(self, x, tau, cond):
        return self.forward_cache(x, tau, cond)[0]

    def forward_cache(self, x, tau, cond):
        cfg, p = self.config, self.params
        x = np.asarray(x, dtype=np.float64)
        cond = np.asarray(getattr(cond, "rows", cond), dtype=np.float64)
        if x.shape != cfg.latent_shape:
            raise InvalidInputError(f"latent shape {x.shape} != {cfg.latent_shape}")
        if cond.ndim != 2 or cond.shape[0] < 1 or cond.shape[1] != cfg.cond_dim:
            raise InvalidInputError(f"condition must be (L>=1, {cfg.cond_dim}), got {cond.shape}")
        tokens = x.reshape(cfg.channels, -1).T
        phi = time_features(tau, cfg.time_features)
        h = tokens @ p["w_in"] + p["b_in"] + p["pos"] + phi @ p["w_t"]
        c = cond @ p["w_c"] + p["b_c"]
        blocks = []
        for k in range(cfg.n_blocks):
            attn = self._attn(k)
            a, acache = attend(h, c, attn)
            h1 = h + a
            u = np.tanh(h1 @ p[f"blk{k}.mlp.w1"] + p[f"blk{k}.mlp.b1"])
            h = h1 + u @ p[f"blk{k}.mlp.w2"] + p[f"blk{k}.mlp.b2"]
            blocks.append((attn, acache, h1, u))
        out = h @ p["w_out"] + p["b_out"]
        pred = out.T.reshape(cfg.latent_shape)
        return pred, (tokens, phi, cond, blocks, h)

    def backward(self, dpred, cache, param_grads: bool = False):
        """Return ``(dcond, grads)``; ``grads`` is None unless ``param_grads``."""
        cfg, p = self.config, self.params
        tokens, phi, cond, blocks, h_last = cache
        dout = np.asarray(dpred).reshape(cfg.channels, -1).T
        g = {} if param_grads else None
        if param_grads:
            g["w_out"] = h_last.T @ dout
            g["b_out"] = dout.sum(axis=0)
        dh = dout @ p["w_out"].T
        dc = None
        for k in reversed(range(cfg.n_blocks)):
            attn, acache, h1, u = blocks[k]
            du = dh @ p[f"blk{k}.mlp.w2"].T
            dz = du * (1.0 - u * u)
            if param_grads:
                g[f"blk{k}.mlp.w2"] = u.T @ dh
                g[f"blk{k}.mlp.b2"] = dh.sum(axis=0)
                g[f"blk{k}.mlp.w1"] = h1.T @ dz
                g[f"blk{k}.mlp.b1"] = dz.sum(axis=0)
            dh1 = dh + dz @ p[f"blk{k}.mlp.w1"].T
            dx_a, dc_a, ga = attend_backward(dh1, acache, attn)
            if param_grads:
                g.update({f"blk{k}.attn.{n}": v for n, v in ga.items()})
            dh = dh1 + dx_a
            dc = dc_a if dc is None else dc + dc_a
        dcond = dc @ p["w_c"].T
        if param_grads:
            g["w_c"] = cond.T @ dc
            g["b_c"] = dc.sum(axis=0)
            g["w_in"] = tokens.T @ dh
            g["b_in"] = dh.sum(axis=0)
            g["pos"] = dh.copy()
            g["w_t"] = np.outer(phi, dh.sum(axis=0))
        return dcond, g

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"format": BACKBONE_FORMAT, "config": asdict(self.config), "checksum": self.checksum()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.params)
        return path

    @classmethod
    def load(cls, path) -> "ToyDenoiser":
        with np.load(Path(path), allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("format") != BACKBONE_FORMAT:
                raise InvalidInputError(f"{path}: not a backbone checkpoint")
            params = {k: data[k] for k in data.files if k != "__meta__"}
        return cls(DenoiserConfig(**meta["config"]), params)


def pretrain_backbone(denoiser: ToyDenoiser, examples, steps: int, lr: float = 3e-3, seed: int = 0,
                      batch_size: int = 4) -> list:
    """Fit all backbone parameters on ``(x0, [condition rows, ...])`` examples.

    Stands in for the large-scale text-to-image pretraining the adapter assumes;
    each draw picks one of the example's conditions at random.
    """
    rng = np.random.default_rng(seed)
    opt = Adam(denoiser.params, lr)
    losses = []
    for _ in range(steps):
        total = {k: np.zeros_like(v) for k, v in denoiser.params.items()}
        batch_loss = 0.0
        for _ in range(batch_size):
            x0, conds = examples[rng.integers(len(examples))]
            cond = conds[rng.integers(len(conds))]
            tau = rng.uniform()
            eps = rng.standard_normal(x0.shape)
            pred, cache = denoiser.forward_cache(add_noise(x0, eps, tau), tau, cond)
            diff = pred - velocity_target(x0, eps)
            batch_loss += float(np.mean(diff * diff))
            _, g = denoiser.backward(2.0 * diff / diff.size / batch_size, cache, param_grads=True)
            for k, v in g.items():
                total[k] += v
        opt.step(total)
        losses.append(batch_loss / batch_size)
    return losses


@dataclass
class SampleResult:
    latent: np.ndarray
    initial_noise: np.ndarray
    trace: list = field(default_factory=list)

    def condition_lengths(self) -> list:
        return [t["cond_length"] for t in self.trace]


def sample(denoiser, bundle: ConditionBundle, cfg: ScheduleConfig, adapter=None,
           flags: AblationFlags = AblationFlags(), seed: int = 0, shape=None,
           guidance_scale: float = 1.0) -> SampleResult:
    """Seeded Euler integration from pure noise to ``tau = 0`` under the stage schedule.

    ``denoiser`` is any callable ``(x_tau, tau, condition_rows) -> velocity``.
    """
    if guidance_scale != 1.0:
        raise ConfigurationError("classifier-free guidance is not implemented; guidance_scale must be 1.0")
    check_bundle(bundle, flags)
    if shape is None:
        shape = denoiser.config.latent_shape
    gen = np.random.Generator(np.random.PCG64(seed))
    x = gen.standard_normal(shape)
    noise = x.copy()
    T = cfg.total_steps
    conditions = {}
    trace = []
    for i in range(T):
        stage = stage_of(i, cfg)
        if stage not in conditions:
            conditions[stage] = assemble(stage, bundle, adapter, flags)
        cond = conditions[stage]
        tau, tau_next = 1.0 - i / T, 1.0 - (i + 1) / T
        v = denoiser(x, tau, cond.rows)
        x = euler_step(x, v, tau, tau_next)
        trace.append({"step": i, "tau": tau, "stage": int(stage), "cond_length": cond.length,
                      "blocks": cond.block_lengths(), "block_order": [name for name, _, _ in cond.layout]})
        log.debug("step %d stage %d condition length %d", i, int(stage), cond.length)
    return SampleResult(x, noise, trace)


def image_to_latent(image: ImageRef, shape=(4, 8, 8)) -> np.ndarray:
    """Box-downsample an RGB image to ``(C, H, W)`` in [-1, 1]; channel 3 is luminance."""
    c, h, w = shape
    pixels = load_image(image)
    im = Image.fromarray(np.clip(pixels * 255.0 + 0.5, 0, 255).astype(np.uint8))
    small = np.asarray(im.resize((w, h), Image.BOX), dtype=np.float64) / 255.0
    luma = small @ np.array([0.299, 0.587, 0.114])
    chans = [small[..., 0], small[..., 1], small[..., 2], luma]
    while len(chans) < c:
        chans.append(luma)
    return np.stack(chans[:c]) * 2.0 - 1.0


def latent_to_image(latent: np.ndarray, scale: int = 8) -> Image.Image:
    """Render the first three channels (min-max normalised) as an upscaled RGB image."""
    rgb = np.asarray(latent)[:3]
    if rgb.shape[0] < 3:
        rgb = np.concatenate([rgb] + [rgb[-1:]] * (3 - rgb.shape[0]))
    lo, hi = rgb.min(), rgb.max()
    norm = (rgb - lo) / (hi - lo) if hi > lo else np.zeros_like(rgb)
    arr = (np.transpose(norm, (1, 2, 0)) * 255.0 + 0.5).astype(np.uint8)
    return Image.fromarray(arr).resize((arr.shape[1] * scale, arr.shape[0] * scale), Image.NEAREST)
