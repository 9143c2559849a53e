"""Text-image alignment scoring and the ablation runner.

The shipped scorer is a plumbing stand-in: cosine similarity between toy embeddings of
the rendered latent and of the text, mapped to [0, 1]. It exercises the harness and
nothing more; its numbers say nothing about real alignment.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from importlib import resources
from pathlib import Path
from typing import Protocol

import numpy as np

from .embeddings import ActionReason, HashTextEncoder, PixelStatsImageEncoder, load_image
from .errors import ConfigurationError, InvalidInputError, TransportError
from .scheduler import ablation_flags

log = logging.getLogger(__name__)

EVAL_COUNTRIES = ("China", "France", "South Africa", "United Arab Emirates", "Mexico")


def report_round(x: float, places: int = 2) -> Decimal:
    """Round half-to-even after snapping away binary noise, so 0.705 reports as 0.70."""
    snapped = Decimal(repr(round(float(x), 12)))
    return snapped.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN)


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class AlignmentScore:
    ar_score: float
    country_score: float

    def __post_init__(self):
        object.__setattr__(self, "ar_score", _check_unit("ar_score", self.ar_score))
        object.__setattr__(self, "country_score", _check_unit("country_score", self.country_score))

    @property
    def average(self) -> float:
        return (self.ar_score + self.country_score) / 2


class AlignmentScorer(Protocol):
    def score(self, image, text: str) -> float: ...


class ConstantScorer:
    def __init__(self, value: float = 1.0):
        self.value = _check_unit("value", value)

    def score(self, image, text: str) -> float:
        return self.value


class ToyEmbeddingScorer:
    """(1 + cos) / 2 between mean-pooled toy image and text embeddings."""

    def __init__(self, dim: int = 16, grid: int = 2, seed: int = 0):
        self.text_encoder = HashTextEncoder(dim, seed)
        self.image_encoder = PixelStatsImageEncoder(dim, grid, seed)

    def score(self, image, text: str) -> float:
        img = self.image_encoder.encode(load_image(image)).rows.mean(axis=0)
        txt = self.text_encoder.encode(text).rows.mean(axis=0)
        denom = np.linalg.norm(img) * np.linalg.norm(txt)
        cos = float(img @ txt / denom) if denom > 0 else 0.0
        return min(1.0, max(0.0, (1.0 + cos) / 2.0))


def score_alignment(image, ar: ActionReason, country: str, scorer: AlignmentScorer) -> AlignmentScore:
    try:
        a = scorer.score(image, ar.render())
        c = scorer.score(image, country)
    except (TransportError, InvalidInputError):
        raise
    except Exception as exc:
        raise TransportError(f"alignment scorer failed: {exc}") from exc
    return AlignmentScore(a, c)


def load_statements(path=None) -> list:
    """The shipped 100 action-reason statements (written for this package) or a custom JSONL."""
    if path is None:
        text = resources.files("culgen").joinpath("resources", "statements.jsonl").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    return [ActionReason(r["action"], r["reason"]) for r in rows]


@dataclass(frozen=True)
class EvalProtocol:
    statements: tuple = field(default_factory=lambda: tuple(load_statements()))
    countries: tuple = EVAL_COUNTRIES
    seed: int = 0

    def __post_init__(self):
        if not self.statements or not self.countries:
            raise ConfigurationError("protocol needs at least one statement and one country")

    @property
    def samples(self) -> int:
        return len(self.statements) * len(self.countries)

    def items(self) -> list:
        """``(index, statement, country)`` in statement-major order."""
        out = [(i * len(self.countries) + j, ar, c)
               for i, ar in enumerate(self.statements) for j, c in enumerate(self.countries)]
        assert len(out) == self.samples
        return out

    def subset(self, limit: int) -> "EvalProtocol":
        """First ``limit`` statements, all countries."""
        return EvalProtocol(tuple(self.statements[:limit]), self.countries, self.seed)


@dataclass
class AblationRow:
    variant: str
    ar_score: float
    country_score: float
    average: float
    n: int
    samples: list = field(default_factory=list)

    def to_json(self, with_samples: bool = False) -> dict:
        d = asdict(self)
        if not with_samples:
            d.pop("samples")
        return d


def summarize(variant: str, samples: list) -> AblationRow:
    if not samples:
        raise InvalidInputError("no samples to summarise")
    ar = float(np.mean([s["ar_score"] for s in samples]))
    co = float(np.mean([s["country_score"] for s in samples]))
    return AblationRow(variant, ar, co, (ar + co) / 2, len(samples), samples)


def evaluate_sample(pipeline, index: int, ar: ActionReason, country: str, scorer, seed: int,
                    variant: str = "culgen", samples_dir=None) -> dict:
    """Generate one image and score it. Retrieval is seeded by the sample index; the
    initial noise always uses the protocol seed."""
    gen = pipeline.generate(ar, country, seed=seed, retrieval_seed=index, flags=ablation_flags(variant))
    score = score_alignment(gen.pixels(), ar, country, scorer)
    record = {
        "index": index, "variant": variant, "action": ar.action, "reason": ar.reason, "country": gen.country,
        "seed": seed, "retrieved": [r.id for r in gen.retrieval.selected], "reference": gen.retrieval.reference.id,
        "blocks": {str(k): v for k, v in gen.blocks_per_stage().items()},
        "ar_score": score.ar_score, "country_score": score.country_score, "average": score.average,
    }
    if samples_dir is not None:
        stem = Path(samples_dir) / f"{variant}_{index:04d}"
        stem.parent.mkdir(parents=True, exist_ok=True)
        np.savez(f"{stem}.npz", latent=gen.latent)
        gen.image().save(f"{stem}.png")
        record["latent"] = f"{stem.name}.npz"
    return record


def run_ablation(variant: str, protocol: EvalProtocol, scorer, pipeline, samples_dir=None,
                 max_workers: int = 1) -> AblationRow:
    ablation_flags(variant)  # fail fast on an unknown name
    items = protocol.items()
    if len(items) != protocol.samples:
        raise ConfigurationError("sample count does not match statements x countries")

    def one(item):
        idx, ar, country = item
        return evaluate_sample(pipeline, idx, ar, country, scorer, protocol.seed, variant, samples_dir)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            samples = list(pool.map(one, items))
    else:
        samples = [one(item) for item in items]
    row = summarize(variant, samples)
    log.info("%s: AR %.4f country %.4f average %.4f over %d samples", variant, row.ar_score,
             row.country_score, row.average, row.n)
    return row


def write_scores(samples, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s, sort_keys=True) + "\n")
    return path


def read_scores(path) -> list:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
