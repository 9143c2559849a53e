"""Adapter-only training: CA1, CA2 and the image projector learn while the backbone
and encoders stay frozen.

Objective is plain conditional flow matching: for each example draw ``tau ~ U[0, 1)``
and ``eps ~ N(0, I)``, condition on the stage that ``tau`` falls in, and regress the
denoiser output onto ``eps - x0``. Only stage-3 draws reach the adapter; earlier
stages contribute a loss but no gradient.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .backbone import ToyDenoiser, add_noise, image_to_latent, velocity_target
from .countries import canonical_country
from .cultural_db import CulturalDB, retrieve
from .embeddings import ActionReason, encode_components, encode_image, encode_text
from .errors import ConfigurationError, InvalidInputError, NonFiniteLossError, NotFoundError
from .optim import Adam
from .projector import Adapter, save_checkpoint
from .prompts import cultural_prompt
from .scheduler import AblationFlags, ConditionBundle, ScheduleConfig, assemble, assemble_backward, stage_of_time

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 1
    grad_accum: int = 4
    steps: int = 500
    dataset_size: int = 250  # informational only
    seed: int = 0
    smoothing_window: int = 25

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        for name in ("batch_size", "grad_accum", "smoothing_window"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.steps < 0:
            raise ConfigurationError("steps must be non-negative")


@dataclass(eq=False)
class TrainExample:
    x0: np.ndarray
    bundle: ConditionBundle
    info: dict = field(default_factory=dict)


@dataclass(eq=False)
class TrainState:
    adapter: Adapter
    optimizer: Adam
    rng: np.random.Generator
    step: int = 0
    optimizer_steps: int = 0
    losses: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    accum: dict = field(default_factory=dict)
    accum_count: int = 0

    @classmethod
    def create(cls, adapter: Adapter, cfg: TrainConfig) -> "TrainState":
        return cls(adapter, Adam(adapter.named_arrays(), cfg.learning_rate), np.random.default_rng(cfg.seed),
                   accum=adapter.zero_grads())


def example_loss_and_grads(example: TrainExample, adapter: Adapter, denoiser: ToyDenoiser, tau: float,
                           eps: np.ndarray, schedule: ScheduleConfig, flags: AblationFlags):
    """Loss for one example at a fixed ``(tau, eps)`` and the adapter gradient of that loss."""
    stage = stage_of_time(tau, schedule)
    cond = assemble(stage, example.bundle, adapter, flags)
    pred, cache = denoiser.forward_cache(add_noise(example.x0, eps, tau), tau, cond.rows)
    diff = pred - velocity_target(example.x0, eps)
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        norms = {k: float(np.linalg.norm(v)) for k, v in adapter.named_arrays().items()}
        raise NonFiniteLossError("non-finite training loss",
                                 {"tau": tau, "stage": int(stage), "cond_length": cond.length, "param_norms": norms})
    if cond.caches:
        dcond, _ = denoiser.backward(2.0 * diff / diff.size, cache)
        grads = assemble_backward(dcond, cond, adapter)
    else:
        grads = adapter.zero_grads()
    return loss, grads, stage


def train_step(batch, state: TrainState, cfg: TrainConfig, *, denoiser: ToyDenoiser,
               schedule: ScheduleConfig = ScheduleConfig(), flags: AblationFlags = AblationFlags()):
    """One forward/backward over ``batch``; applies Adam every ``cfg.grad_accum`` calls."""
    if not batch:
        raise InvalidInputError("empty training batch")
    total = 0.0
    for example in batch:
        tau = float(state.rng.uniform())
        eps = state.rng.standard_normal(example.x0.shape)
        loss, grads, stage = example_loss_and_grads(example, state.adapter, denoiser, tau, eps, schedule, flags)
        total += loss
        for key, g in grads.items():
            state.accum[key] += g / len(batch)
        state.stages.append(int(stage))
    loss = total / len(batch)
    state.step += 1
    state.accum_count += 1
    state.losses.append(loss)
    if state.accum_count == cfg.grad_accum:
        state.optimizer.step({k: g / cfg.grad_accum for k, g in state.accum.items()})
        for g in state.accum.values():
            g[...] = 0.0
        state.accum_count = 0
        state.optimizer_steps += 1
    return loss, state


def smoothed(losses, window: int) -> np.ndarray:
    """Trailing moving average; entry ``i`` averages ``losses[max(0, i - window + 1) : i + 1]``."""
    arr = np.asarray(losses, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(arr)])
    idx = np.arange(1, arr.size + 1)
    lo = np.maximum(0, idx - window)
    return (csum[idx] - csum[lo]) / (idx - lo)


def load_training_manifest(path) -> list:
    """JSON-lines ``{image, country, action, reason}``; relative images resolve against the file."""
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            row = {k: row[k] for k in ("image", "country", "action", "reason")}
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InvalidInputError(f"{path}:{lineno}: malformed training record ({exc})") from exc
        img = Path(row["image"])
        row["image"] = img if img.is_absolute() else path.parent / img
        rows.append(row)
    if not rows:
        raise InvalidInputError(f"{path}: training manifest is empty")
    return rows


def make_bundle(db: CulturalDB, country: str, ar: ActionReason, seed: int, text_encoder, image_encoder,
                per_component: bool = False):
    """Retrieve references for ``country`` and encode every conditioning source."""
    hit = retrieve(db, country, seed)
    others = [r for r in hit.selected if r is not hit.reference]
    bundle = ConditionBundle(
        prompt=encode_text(cultural_prompt(ar, country), text_encoder),
        cultural=encode_components(hit.components, text_encoder, per_component),
        reason=encode_text(ar.reason, text_encoder),
        image=encode_image(hit.reference.image_ref, image_encoder),
        extra_images=tuple(encode_image(r.image_ref, image_encoder) for r in others),
    )
    return bundle, hit


def build_examples(rows, db: CulturalDB, text_encoder, image_encoder, latent_shape, seed: int = 0) -> list:
    examples = []
    for i, row in enumerate(rows):
        try:
            country = canonical_country(row["country"])
            db.records_for(country)
        except NotFoundError as exc:
            log.warning("skipping training example %d (%s): %s", i, row["image"], exc)
            continue
        ar = ActionReason(row["action"], row["reason"])
        bundle, hit = make_bundle(db, country, ar, seed + i, text_encoder, image_encoder)
        examples.append(TrainExample(image_to_latent(row["image"], latent_shape), bundle,
                                     {"image": str(row["image"]), "country": country,
                                      "reference": hit.reference.id}))
    if not examples:
        raise ConfigurationError("every training example was skipped: no country resolved in the database")
    return examples


@dataclass
class TrainResult:
    adapter: Adapter
    losses: list
    stages: list
    optimizer_steps: int
    checkpoint: Path | None = None
    loss_csv: Path | None = None

    def smoothed_losses(self, window: int) -> np.ndarray:
        return smoothed(self.losses, window)


def train(cfg: TrainConfig, examples, denoiser: ToyDenoiser, adapter: Adapter, *,
          schedule: ScheduleConfig = ScheduleConfig(), flags: AblationFlags = AblationFlags(),
          out_dir=None) -> TrainResult:
    """Run ``cfg.steps`` train steps over ``examples`` (reshuffled every epoch).

    ``adapter`` is copied; the caller's instance is left untouched.
    """
    if not examples:
        raise InvalidInputError("no training examples")
    state = TrainState.create(adapter.copy(), cfg)
    order_rng = np.random.default_rng([cfg.seed, 1])
    queue: list = []
    for _ in range(cfg.steps):
        batch = []
        while len(batch) < cfg.batch_size:
            if not queue:
                queue = list(order_rng.permutation(len(examples)))
            batch.append(examples[queue.pop(0)])
        train_step(batch, state, cfg, denoiser=denoiser, schedule=schedule, flags=flags)
        if state.step % 50 == 0:
            log.info("step %d loss %.4f (smoothed %.4f)", state.step, state.losses[-1],
                     smoothed(state.losses, cfg.smoothing_window)[-1])
    state.adapter.meta.update({"train_config": asdict(cfg), "steps_run": state.step,
                               "optimizer_steps": state.optimizer_steps})
    result = TrainResult(state.adapter, state.losses, state.stages, state.optimizer_steps)
    if out_dir is not None:
        out_dir = Path(out_dir)
        result.checkpoint = save_checkpoint(state.adapter, out_dir / "adapter.npz")
        result.loss_csv = write_loss_csv(state.losses, out_dir / "loss.csv")
    return result


def write_loss_csv(losses, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, loss in enumerate(losses, start=1):
            writer.writerow([i, repr(float(loss))])
    return path
