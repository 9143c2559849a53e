"""Country-indexed store of reference ads and their cultural components.

Retrieval sampling procedure (fixed so results are reproducible from the seed):

1. take the records for the country, sorted by ``id``; let ``n`` be their count
   and ``k = min(3, n)``;
2. create ``numpy.random.Generator(PCG64(seed))``;
3. partial Fisher-Yates: ``idx = [0..n-1]``; for ``j`` in ``0..k-1`` draw
   ``r = gen.integers(j, n)`` and swap ``idx[j]`` with ``idx[r]``; the selected
   records are ``idx[0..k-1]`` in that order;
4. one further draw ``gen.integers(0, k)`` picks the visual reference among the
   selected records.

Components are merged by ordered set union over the selected records, followed
by the country's visual element when the lookup table has one.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np

from .countries import canonical_country
from .errors import ManifestError, NotFoundError

log = logging.getLogger(__name__)

SAMPLE_SIZE = 3


def _dedupe(items) -> tuple:
    seen, out = set(), []
    for item in items:
        item = str(item).strip()
        if item and item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


@dataclass(frozen=True)
class CulturalRecord:
    id: str
    image_ref: Path
    country: str
    components: tuple = ()
    topic: str | None = None

    def __post_init__(self):
        if not self.country:
            raise ManifestError(f"record {self.id!r} has an empty country")
        object.__setattr__(self, "components", _dedupe(self.components))
        object.__setattr__(self, "image_ref", Path(self.image_ref))


@dataclass(frozen=True)
class CountryVisualElement:
    country: str
    element: str


@dataclass(frozen=True)
class RetrievalResult:
    selected: tuple
    components: tuple
    reference: CulturalRecord
    seed: int
    visual_element: str | None = None


class CulturalDB:
    """Immutable after construction; safe to share between retrieval workers."""

    def __init__(self, records, visual_elements=None):
        records = tuple(sorted(records, key=lambda r: r.id))
        ids = [r.id for r in records]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ManifestError(f"duplicate record ids: {dupes}")
        by_country: dict = {}
        for rec in records:
            by_country.setdefault(rec.country, []).append(rec)
        self._records = records
        self._by_country = MappingProxyType({c: tuple(rs) for c, rs in by_country.items()})
        self._visual = MappingProxyType(dict(visual_elements or {}))

    @property
    def records(self) -> tuple:
        return self._records

    @property
    def visual_elements(self):
        return self._visual

    def countries(self) -> list[str]:
        return sorted(self._by_country)

    def count(self, country: str | None = None) -> int:
        if country is None:
            return len(self._records)
        return len(self._by_country.get(country, ()))

    def counts(self) -> dict:
        return {c: len(rs) for c, rs in sorted(self._by_country.items())}

    def records_for(self, country: str) -> tuple:
        recs = self._by_country.get(country)
        if not recs:
            raise NotFoundError(f"no records for country {country!r}; known countries: {self.countries()}")
        return recs

    def with_visual_elements(self, table) -> "CulturalDB":
        return CulturalDB(self._records, table)


def ingest(manifest, visual_elements=None, check_images: bool = True) -> CulturalDB:
    """Build a DB from a JSON-lines manifest ``{id, image, country, components[], topic?}``.

    Relative image paths resolve against the manifest's directory.
    """
    manifest = Path(manifest)
    base = manifest.parent
    records = []
    try:
        lines = manifest.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {manifest}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            rec_id = str(row["id"])
            image = Path(row["image"])
            raw_country = row["country"]
            components = row.get("components", [])
            if not isinstance(components, list):
                raise TypeError("components must be a list")
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ManifestError(f"{manifest}:{lineno}: malformed record ({exc})") from exc
        try:
            country = canonical_country(raw_country)
        except NotFoundError as exc:
            raise ManifestError(f"{manifest}:{lineno}: {exc}") from exc
        if not image.is_absolute():
            image = base / image
        if check_images and not image.is_file():
            raise ManifestError(f"{manifest}:{lineno}: missing image {image}")
        records.append(CulturalRecord(rec_id, image, country, tuple(components), row.get("topic")))
    if not records:
        raise ManifestError(f"{manifest}: no records")
    db = CulturalDB(records, visual_elements)
    log.info("ingested %d records over %d countries: %s", db.count(), len(db.countries()), db.counts())
    return db


def _partial_shuffle(n: int, k: int, gen: np.random.Generator) -> list[int]:
    idx = list(range(n))
    for j in range(k):
        r = int(gen.integers(j, n))
        idx[j], idx[r] = idx[r], idx[j]
    return idx[:k]


def retrieve(db: CulturalDB, country: str, seed: int, topic: str | None = None) -> RetrievalResult:
    """Sample up to three same-country records, merge their components, pick a reference.

    ``topic`` restricts the pool to records with that topic when any exist.
    """
    pool = db.records_for(country)
    if topic is not None:
        on_topic = tuple(r for r in pool if r.topic == topic)
        pool = on_topic or pool
    n = len(pool)
    k = min(SAMPLE_SIZE, n)
    gen = np.random.Generator(np.random.PCG64(seed))
    selected = tuple(pool[i] for i in _partial_shuffle(n, k, gen))
    reference = selected[int(gen.integers(0, k))]
    assert all(r.country == country for r in selected)
    components = [c for r in selected for c in r.components]
    element = None
    try:
        element = lookup_visual_element(country, db.visual_elements).element
    except NotFoundError:
        log.info("no visual element for %s; retrieving without it", country)
    else:
        components.append(element)
    return RetrievalResult(selected, _dedupe(components), reference, seed, element)


def lookup_visual_element(country: str, table) -> CountryVisualElement:
    try:
        return CountryVisualElement(country, table[country])
    except KeyError:
        raise NotFoundError(f"no visual element for {country!r}") from None


def load_visual_elements(path=None) -> dict:
    """Read a ``{country: element}`` JSON table; the shipped table when ``path`` is None."""
    if path is None:
        from importlib import resources
        text = resources.files("culgen").joinpath("resources", "visual_elements.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


def save_visual_elements(table: dict, path) -> None:
    Path(path).write_text(json.dumps(dict(table), indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


VISUAL_ELEMENT_PROMPT = (
    "Name one representative visual element (a landmark, object, pattern or symbol) that an "
    "advertisement could show to signal that it targets people from {country}. "
    "Answer with the element only."
)


def generate_visual_elements(countries, client) -> dict:
    """Ask a text-model client (``complete(prompt) -> str``) for one element per country."""
    table = {}
    for country in countries:
        lines = client.complete(VISUAL_ELEMENT_PROMPT.format(country=country)).strip().splitlines()
        answer = lines[0].strip().rstrip(".").strip() if lines else ""
        if answer:
            table[country] = answer
    return table


def save_db(db: CulturalDB, path) -> Path:
    """Persist as one JSON index; image paths are stored relative to the index when possible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    root = path.parent.resolve()
    rows = []
    for rec in db.records:
        img = rec.image_ref.resolve()
        try:
            img_str = str(img.relative_to(root))
        except ValueError:
            img_str = str(img)
        rows.append({"id": rec.id, "image": img_str, "country": rec.country,
                     "components": list(rec.components), "topic": rec.topic})
    index = {"format": "culgen-db/1", "records": rows, "visual_elements": dict(db.visual_elements),
             "counts": db.counts()}
    path.write_text(json.dumps(index, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def load_db(path) -> CulturalDB:
    path = Path(path)
    index = json.loads(path.read_text(encoding="utf-8"))
    records = []
    for row in index["records"]:
        img = Path(row["image"])
        if not img.is_absolute():
            img = path.parent / img
        records.append(CulturalRecord(row["id"], img, row["country"], tuple(row["components"]), row.get("topic")))
    return CulturalDB(records, index.get("visual_elements"))
