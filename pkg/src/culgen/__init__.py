"""Time-step staged conditioning for culture-targeted ad generation, plus the
annotation and bias-audit tooling around it."""

from .embeddings import ActionReason, Embedding, HashTextEncoder, PixelStatsImageEncoder
from .errors import CulgenError
from .kernels import BACKEND as KERNEL_BACKEND
from .projector import Adapter
from .scheduler import AblationFlags, ConditionBundle, ScheduleConfig, Stage, stage_of

__version__ = "0.1.0"

__all__ = [
    "ActionReason", "Adapter", "AblationFlags", "ConditionBundle", "CulgenError", "Embedding",
    "HashTextEncoder", "KERNEL_BACKEND", "PixelStatsImageEncoder", "ScheduleConfig", "Stage", "stage_of",
]
