"""Time-step staged conditioning.

Denoising iterations are indexed ``i = 0 .. T-1`` from noisiest to cleanest. The
fraction ``i / T`` picks the stage: early steps see only the prompt, middle steps
add the cultural components, late steps additionally see the projected image.

Ablation mapping (which blocks each stage receives)::

    variant       stage 1           stage 2           stage 3
    culgen        P                 P C               I P C
    no_cultural   P                 P                 I P
    early         P C               P C               I P C
    late          P                 P                 I P C
    no_style      P                 P C               P C
    multi_style   P                 P C               I1 I2 I3 P C
    none          P                 P                 P

``P`` prompt, ``C`` cultural components, ``I`` projected image block (one per
style image). With ``include_reason`` the reason rows are appended after ``C``
in stage 3.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .embeddings import Embedding
from .errors import ConfigurationError, InvalidInputError
from .projector import Adapter


class Stage(enum.IntEnum):
    PROMPT = 1
    CULTURAL = 2
    IMAGE = 3


@dataclass(frozen=True)
class ScheduleConfig:
    b1: float = 1 / 3
    b2: float = 2 / 3
    total_steps: int = 30

    def __post_init__(self):
        if not 0.0 < self.b1 < self.b2 < 1.0:
            raise ConfigurationError(f"stage boundaries must satisfy 0 < b1 < b2 < 1, got b1={self.b1}, b2={self.b2}")
        if int(self.total_steps) != self.total_steps or self.total_steps < 1:
            raise ConfigurationError(f"total_steps must be a positive integer, got {self.total_steps}")


def _stage_for_progress(progress: float, cfg: ScheduleConfig) -> Stage:
    if progress < cfg.b1:
        return Stage.PROMPT
    if progress < cfg.b2:
        return Stage.CULTURAL
    return Stage.IMAGE


def stage_of(i: int, cfg: ScheduleConfig) -> Stage:
    if not 0 <= i < cfg.total_steps:
        raise InvalidInputError(f"step index {i} outside [0, {cfg.total_steps})")
    return _stage_for_progress(i / cfg.total_steps, cfg)


def stage_of_time(tau: float, cfg: ScheduleConfig) -> Stage:
    """Stage for a continuous noise level ``tau`` (1 = pure noise, 0 = clean)."""
    if not 0.0 <= tau <= 1.0:
        raise InvalidInputError(f"tau={tau} outside [0, 1]")
    return _stage_for_progress(1.0 - tau, cfg)


CULTURAL_START = {"early": Stage.PROMPT, "middle": Stage.CULTURAL, "late": Stage.IMAGE}


@dataclass(frozen=True)
class AblationFlags:
    include_cultural: bool = True
    cultural_start_stage: str = "middle"
    include_style_image: bool = True
    num_style_images: int = 1
    include_reason: bool = False

    def __post_init__(self):
        if self.cultural_start_stage not in CULTURAL_START:
            raise ConfigurationError(
                f"cultural_start_stage must be one of {sorted(CULTURAL_START)}, got {self.cultural_start_stage!r}"
            )
        if self.num_style_images not in (1, 2, 3):
            raise ConfigurationError(f"num_style_images must be 1, 2 or 3, got {self.num_style_images}")

    def blocks_for(self, stage: Stage) -> list[str]:
        """Block names in concatenation order for ``stage``."""
        blocks = []
        if stage == Stage.IMAGE and self.include_style_image:
            blocks += [f"image{k}" for k in range(self.num_style_images)]
        blocks.append("prompt")
        if self.include_cultural and stage >= CULTURAL_START[self.cultural_start_stage]:
            blocks.append("cultural")
        if stage == Stage.IMAGE and self.include_reason:
            blocks.append("reason")
        return blocks


ABLATIONS = {
    "culgen": AblationFlags(),
    "no_cultural": AblationFlags(include_cultural=False),
    "early": AblationFlags(cultural_start_stage="early"),
    "late": AblationFlags(cultural_start_stage="late"),
    "no_style": AblationFlags(include_style_image=False),
    "multi_style": AblationFlags(num_style_images=3),
    "none": AblationFlags(include_cultural=False, include_style_image=False),
}


def ablation_flags(variant: str) -> AblationFlags:
    try:
        return ABLATIONS[variant]
    except KeyError:
        raise ConfigurationError(f"unknown ablation variant {variant!r}; expected one of {sorted(ABLATIONS)}") from None


@dataclass(frozen=True, eq=False)
class ConditionBundle:
    prompt: Embedding
    cultural: Embedding | None = None
    reason: Embedding | None = None
    image: Embedding | None = None
    extra_images: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.prompt is None:
            raise ConfigurationError("condition bundle needs a prompt embedding")
        for name in ("cultural", "reason"):
            member = getattr(self, name)
            if member is not None and member.dim != self.prompt.dim:
                raise InvalidInputError(f"{name} dim {member.dim} differs from prompt dim {self.prompt.dim}")

    @property
    def style_images(self) -> tuple:
        return tuple(x for x in (self.image, *self.extra_images) if x is not None)

    def with_images(self, image, extra=()) -> "ConditionBundle":
        return replace(self, image=image, extra_images=tuple(extra))


def _require(bundle: ConditionBundle, member: str, stage: Stage):
    value = getattr(bundle, member)
    if value is None:
        raise ConfigurationError(f"condition for stage {int(stage)} needs bundle member {member!r}, which is missing")
    return value


def check_bundle(bundle: ConditionBundle, flags: AblationFlags, stages=tuple(Stage)):
    """Raise ConfigurationError if ``bundle`` lacks a member any of ``stages`` needs."""
    for stage in stages:
        blocks = flags.blocks_for(stage)
        if "cultural" in blocks:
            _require(bundle, "cultural", stage)
        if "reason" in blocks:
            _require(bundle, "reason", stage)
        n_img = sum(b.startswith("image") for b in blocks)
        if n_img:
            for member in ("cultural", "reason", "image"):
                _require(bundle, member, stage)
            if len(bundle.style_images) < n_img:
                raise ConfigurationError(
                    f"stage {int(stage)} needs {n_img} style images, bundle has {len(bundle.style_images)}"
                )


@dataclass
class AssembledCondition:
    """Stage condition rows plus the block layout and caches for backprop into the adapter."""

    rows: np.ndarray
    layout: list  # (name, start, stop)
    caches: dict

    @property
    def length(self) -> int:
        return self.rows.shape[0]

    def block_lengths(self) -> dict:
        return {name: stop - start for name, start, stop in self.layout}


def assemble(stage: Stage, bundle: ConditionBundle, adapter: Adapter | None, flags: AblationFlags) -> AssembledCondition:
    blocks = flags.blocks_for(stage)
    check_bundle(bundle, flags, (stage,))
    parts, layout, caches = [], [], {}
    start = 0
    for name in blocks:
        if name.startswith("image"):
            if adapter is None:
                raise ConfigurationError(f"stage {int(stage)} needs adapter parameters for block {name!r}")
            img = bundle.style_images[int(name[5:])]
            rows, cache = adapter.projected_block(bundle.cultural.rows, bundle.reason.rows, img.rows)
            caches[name] = cache
        else:
            rows = getattr(bundle, name).rows
        parts.append(rows)
        layout.append((name, start, start + rows.shape[0]))
        start += rows.shape[0]
    return AssembledCondition(np.concatenate(parts, axis=0) if len(parts) > 1 else parts[0], layout, caches)


def assemble_backward(dcond: np.ndarray, cond: AssembledCondition, adapter: Adapter) -> dict:
    """Adapter gradients from the gradient w.r.t. the condition rows."""
    grads = adapter.zero_grads()
    for name, start, stop in cond.layout:
        if name in cond.caches:
            for key, g in adapter.projected_block_backward(dcond[start:stop], cond.caches[name]).items():
                grads[key] += g
    return grads


def build_condition(stage: Stage, bundle: ConditionBundle, adapter: Adapter | None,
                    flags: AblationFlags = AblationFlags()) -> Embedding:
    if stage == Stage.PROMPT and flags.blocks_for(stage) == ["prompt"]:
        return bundle.prompt
    return Embedding(assemble(stage, bundle, adapter, flags).rows, f"condition-stage{int(stage)}")


def condition_length(stage: Stage, prompt_len: int, cultural_len: int, reason_len: int = 0,
                     flags: AblationFlags = AblationFlags()) -> int:
    """Closed-form condition length; the projected image block has the cultural length."""
    sizes = {"prompt": prompt_len, "cultural": cultural_len, "reason": reason_len}
    return sum(cultural_len if b.startswith("image") else sizes[b] for b in flags.blocks_for(stage))
