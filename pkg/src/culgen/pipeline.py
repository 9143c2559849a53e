"""Everything needed to turn (AR, country) into a latent: frozen encoders and backbone,
the trained adapter, the cultural database and the stage schedule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .backbone import DenoiserConfig, ToyDenoiser, latent_to_image, pretrain_backbone, sample
from .countries import canonical_country
from .cultural_db import CulturalDB
from .embeddings import ActionReason, HashTextEncoder, PixelStatsImageEncoder, concat_sequences
from .projector import Adapter
from .scheduler import AblationFlags, ScheduleConfig
from .trainer import make_bundle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    text_dim: int = 16
    image_dim: int = 16
    image_grid: int = 2
    seed: int = 0
    per_component: bool = False

    def build(self) -> tuple:
        return (HashTextEncoder(self.text_dim, self.seed),
                PixelStatsImageEncoder(self.image_dim, self.image_grid, self.seed))


@dataclass
class Generation:
    latent: np.ndarray
    trace: list
    retrieval: object
    ar: ActionReason
    country: str
    seed: int

    def image(self, scale: int = 8):
        return latent_to_image(self.latent, scale)

    def pixels(self) -> np.ndarray:
        return np.asarray(self.image(), dtype=np.float64) / 255.0

    def blocks_per_stage(self) -> dict:
        out = {}
        for t in self.trace:
            out.setdefault(t["stage"], t["blocks"])
        return out


@dataclass
class Pipeline:
    denoiser: ToyDenoiser
    adapter: Adapter | None
    db: CulturalDB
    encoders: EncoderConfig = field(default_factory=EncoderConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)

    def __post_init__(self):
        self.text_encoder, self.image_encoder = self.encoders.build()

    def bundle(self, ar: ActionReason, country: str, retrieval_seed: int):
        return make_bundle(self.db, canonical_country(country), ar, retrieval_seed, self.text_encoder,
                           self.image_encoder, self.encoders.per_component)

    def generate(self, ar: ActionReason, country: str, seed: int = 0, retrieval_seed: int | None = None,
                 flags: AblationFlags = AblationFlags()) -> Generation:
        bundle, hit = self.bundle(ar, country, seed if retrieval_seed is None else retrieval_seed)
        res = sample(self.denoiser, bundle, self.schedule, self.adapter, flags, seed=seed)
        return Generation(res.latent, res.trace, hit, ar, canonical_country(country), seed)


def pretrain_on_examples(examples, config: DenoiserConfig = DenoiserConfig(), steps: int = 1500,
                         lr: float = 3e-3, seed: int = 0) -> tuple:
    """Fit a fresh toy backbone on the stage-1 and stage-2 conditions of ``examples``.

    This gives the frozen backbone a meaningful response to text conditions before the
    adapter is trained against it. Returns ``(denoiser, losses)``.
    """
    den = ToyDenoiser.init(config, seed)
    pairs = [(e.x0, [e.bundle.prompt.rows, concat_sequences([e.bundle.prompt, e.bundle.cultural]).rows])
             for e in examples]
    losses = pretrain_backbone(den, pairs, steps, lr=lr, seed=seed)
    return den, losses

