"""Country and cultural-component annotation through a vision-language client,
plus recall / P@1 scoring and the country distribution summary."""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from .clients import VLMClient, with_retries
from .countries import CountryVocabulary, RegionMap
from .errors import AnnotationError, InvalidInputError, NotFoundError, TransportError
from .prompts import load as load_prompt

log = logging.getLogger(__name__)

MAX_COUNTRIES = 3

_ITEM = re.compile(r"(?:^|\s)\d+\s*[.)]\s*(.+?)(?=\s+\d+\s*[.)]\s|\n|$)")
_COMPONENTS = re.compile(r"(?im)^\s*components\s*:")


@dataclass(frozen=True)
class AnnotationResult:
    image_id: str
    countries: tuple
    components: tuple = ()
    raw_response: str = ""

    def __post_init__(self):
        if not 1 <= len(self.countries) <= MAX_COUNTRIES:
            raise AnnotationError(f"{self.image_id}: expected 1-3 countries, got {len(self.countries)}",
                                  self.raw_response)

    def to_json(self) -> dict:
        return {**asdict(self), "countries": list(self.countries), "components": list(self.components)}

    @classmethod
    def from_json(cls, row: dict) -> "AnnotationResult":
        return cls(row["image_id"], tuple(row["countries"]), tuple(row.get("components", ())),
                   row.get("raw_response", ""))


def parse_response(raw: str, vocab: CountryVocabulary | None = None) -> tuple:
    """Return ``(countries, components)`` from a numbered-list response."""
    vocab = vocab or CountryVocabulary.default()
    parts = _COMPONENTS.split(raw, maxsplit=1)
    head, tail = parts[0], (parts[1] if len(parts) > 1 else "")
    names = [m.group(1).strip().strip(".,;:").strip() for m in _ITEM.finditer(head)]
    names = [n for n in names if n]
    if not names:
        raise AnnotationError("no country predictions found in response", raw)
    countries = []
    for name in names:
        try:
            canon = vocab.canonical(name)
        except NotFoundError:
            near = vocab.nearest(name)
            raise AnnotationError(f"unknown country {name!r}; nearest canonical names: {near}", raw, near) from None
        if canon not in countries:
            countries.append(canon)
    if len(countries) > MAX_COUNTRIES:
        log.warning("response lists %d countries; keeping the first %d", len(countries), MAX_COUNTRIES)
        countries = countries[:MAX_COUNTRIES]
    components = tuple(c.strip() for c in tail.split("\n", 1)[0].split(",") if c.strip())
    return tuple(countries), components


def annotate(image, client: VLMClient, image_id: str | None = None, instruction: str | None = None,
             vocab: CountryVocabulary | None = None, retries: int = 3) -> AnnotationResult:
    instruction = instruction or load_prompt("annotate_country")
    image_id = image_id or Path(str(image)).stem

    def call():
        try:
            return client.query(image, instruction)
        except (TransportError, NotFoundError, OSError):
            raise
        except Exception as exc:
            raise TransportError(f"annotation client failed on {image_id}: {exc}") from exc

    raw = with_retries(call, attempts=retries)
    countries, components = parse_response(raw, vocab)
    return AnnotationResult(image_id, countries, components, raw)


def annotate_many(items, client: VLMClient, max_workers: int = 4, **kwargs) -> list:
    """Annotate ``(image_id, image)`` pairs with bounded parallelism; order is preserved."""
    items = list(items)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(annotate, image, client, image_id, **kwargs) for image_id, image in items]
        return [f.result() for f in futures]


def score_annotations(preds, gold: dict, grouping: RegionMap | None = None) -> dict:
    """Recall (gold among the predictions) and P@1 (gold is the top prediction)."""
    preds = list(preds)
    if not preds:
        raise InvalidInputError("no predictions to score")
    missing = [p.image_id for p in preds if p.image_id not in gold]
    if missing:
        raise InvalidInputError(f"no gold label for image ids: {missing}")
    key = (lambda c: grouping[c]) if grouping is not None else (lambda c: c)
    hits = top1 = 0
    for p in preds:
        g = key(gold[p.image_id])
        mapped = [key(c) for c in p.countries]
        hits += g in mapped
        top1 += g == mapped[0]
    n = len(preds)
    return {"recall": hits / n, "p_at_1": top1 / n, "n": n}


def distribution_report(annotations) -> dict:
    """Top-1 country counts, most frequent first (ties alphabetical)."""
    annotations = list(annotations)
    if not annotations:
        raise InvalidInputError("no annotations")
    counts = Counter(a.countries[0] for a in annotations)
    return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def share(counts: dict, countries) -> float:
    """Fraction of images whose top-1 country is in ``countries``."""
    total = sum(counts.values())
    return sum(counts.get(c, 0) for c in countries) / total


def write_annotations(annotations, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for a in annotations:
            fh.write(json.dumps(a.to_json(), ensure_ascii=False) + "\n")
    return path


def read_annotations(path) -> list:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [AnnotationResult.from_json(json.loads(line)) for line in lines if line.strip()]


def read_gold(path, vocab: CountryVocabulary | None = None) -> dict:
    """CSV with columns ``image_id,country``; countries are canonicalised."""
    vocab = vocab or CountryVocabulary.default()
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["image_id"]: vocab.canonical(row["country"]) for row in csv.DictReader(fh)}
