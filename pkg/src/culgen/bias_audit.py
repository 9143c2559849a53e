"""Demographic audit of generated ad images and persuasion-preference audit of judges.

Two halves:

* profiling faces (via a pluggable analyzer) and tabulating race / gender shares per topic;
* building attribute-swap pairs from one base ad, asking judges which variant is more
  persuasive in both presentation orders, and aggregating wins.

Aggregation only counts pairs that have a valid verdict in both orders, so a judge that
always answers "1" (or always "2") ends up at exactly 50/50 between two values.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .clients import JudgeRequest
from .errors import AuditError, ConfigurationError, InvalidInputError, TransportError
from .prompts import load as load_prompt
from .prompts import render

log = logging.getLogger(__name__)

RACES = ("White", "Latinx", "Asian", "Black", "Middle-Eastern", "Indian")
RACES_5 = RACES[:5]
RACE_ABBREV = {"White": "W", "Latinx": "L", "Asian": "A", "Black": "B", "Middle-Eastern": "M", "Indian": "I"}
GENDERS = ("man", "woman")
ORDERS = ("ab", "ba")
MODALITIES = ("MLLM", "LLM")

RACE_ALIASES = {
    "white": "White", "caucasian": "White",
    "latino hispanic": "Latinx", "latino": "Latinx", "hispanic": "Latinx", "latinx": "Latinx",
    "asian": "Asian", "east asian": "Asian",
    "black": "Black", "african": "Black",
    "middle eastern": "Middle-Eastern", "middle-eastern": "Middle-Eastern", "arab": "Middle-Eastern",
    "indian": "Indian", "south asian": "Indian",
}
GENDER_ALIASES = {"man": "man", "male": "man", "men": "man", "m": "man",
                  "woman": "woman", "female": "woman", "women": "woman", "f": "woman"}
NON_BINARY = {"non-binary", "nonbinary", "non binary", "nb", "other"}


def _norm(label: str) -> str:
    return " ".join(str(label).strip().lower().replace("_", " ").split())


def canonical_race(label: str) -> str:
    try:
        return RACE_ALIASES[_norm(label)]
    except KeyError:
        raise AuditError(f"unknown race label {label!r}", label) from None


def canonical_gender(label: str):
    """``'man'``/``'woman'``, or None for non-binary outputs (counted, never tabulated)."""
    key = _norm(label)
    if key in NON_BINARY:
        return None
    try:
        return GENDER_ALIASES[key]
    except KeyError:
        raise AuditError(f"unknown gender label {label!r}", label) from None


@dataclass(frozen=True)
class DemographicProfile:
    image_id: str
    face_index: int
    gender: str | None
    race: str

    def __post_init__(self):
        if self.gender is not None and self.gender not in GENDERS:
            raise AuditError(f"gender {self.gender!r} outside {GENDERS}", self.gender)
        if self.race not in RACES:
            raise AuditError(f"race {self.race!r} outside {RACES}", self.race)


class FixtureFaceAnalyzer:
    """Replays recorded analyzer outputs: ``{image_id: [{"gender": ..., "race": ...}, ...]}``."""

    def __init__(self, table: dict):
        self.table = table

    @classmethod
    def load(cls, path) -> "FixtureFaceAnalyzer":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def analyze(self, image) -> list:
        key = Path(str(image)).stem
        if key not in self.table:
            raise TransportError(f"analyzer has no output for {image}")
        return self.table[key]


def profile_faces(image, analyzer, image_id: str | None = None) -> list:
    """Profile every face in one image. Accepts DeepFace-style keys (``dominant_gender``,
    ``dominant_race``) as well as plain ``gender`` / ``race``."""
    image_id = image_id or Path(str(image)).stem
    try:
        faces = analyzer.analyze(image)
    except TransportError:
        raise
    except Exception as exc:
        raise TransportError(f"face analyzer failed on {image_id}: {exc}") from exc
    out = []
    for i, face in enumerate(faces):
        gender = face.get("dominant_gender", face.get("gender"))
        race = face.get("dominant_race", face.get("race"))
        out.append(DemographicProfile(image_id, i, canonical_gender(gender), canonical_race(race)))
    return out


@dataclass
class DistributionTable:
    """Percentages per topic plus an ``Overall`` row computed over all faces."""

    axis: str
    labels: tuple
    rows: dict
    counts: dict
    excluded: dict = field(default_factory=dict)

    def rounded(self, digits: int = 0) -> dict:
        return {t: {k: round(v, digits) if digits else int(round(v)) for k, v in row.items()}
                for t, row in self.rows.items()}


def _shares(counter: Counter, labels) -> dict:
    total = sum(counter[l] for l in labels)
    return {l: (100.0 * counter[l] / total if total else float("nan")) for l in labels}


def tabulate_demographics(profiles, topics: dict, axis: str = "race", labels=None) -> DistributionTable:
    """Tabulate ``profiles`` by topic.

    ``topics`` maps image id to topic. ``axis="race"`` gives the share of each label in
    ``labels`` (default W/L/A/B/M); faces outside the label set are excluded from the
    denominator and counted. ``axis="gender"`` gives the share of men among faces with a
    binary gender label; non-binary outputs are counted separately.
    """
    profiles = list(profiles)
    if not profiles:
        raise InvalidInputError("no face profiles to tabulate")
    missing = sorted({p.image_id for p in profiles if p.image_id not in topics})
    if missing:
        raise InvalidInputError(f"profiled images without a topic: {missing}")
    if axis == "race":
        labels = tuple(labels or RACES_5)
        key = lambda p: p.race  # noqa: E731
    elif axis == "gender":
        labels = ("man",)
        key = lambda p: p.gender  # noqa: E731
    else:
        raise ConfigurationError(f"axis must be 'race' or 'gender', not {axis!r}")

    by_topic: dict = defaultdict(Counter)
    for p in profiles:
        by_topic[topics[p.image_id]][key(p)] += 1
        by_topic["Overall"][key(p)] += 1
    rows, counts, excluded = {}, {}, {}
    for topic in sorted(t for t in by_topic if t != "Overall") + ["Overall"]:
        c = by_topic[topic]
        if axis == "race":
            rows[topic] = _shares(c, labels)
            counts[topic] = {l: c[l] for l in labels}
            excluded[topic] = sum(v for k, v in c.items() if k not in labels)
        else:
            binary = c["man"] + c["woman"]
            rows[topic] = {"man": 100.0 * c["man"] / binary if binary else float("nan")}
            counts[topic] = {"man": c["man"], "woman": c["woman"]}
            excluded[topic] = c[None]
    return DistributionTable(axis, labels, rows, counts, excluded)


# ---------------------------------------------------------------- swap pairs


@dataclass(frozen=True)
class Variant:
    value: str
    image: str
    description: str
    provenance: dict


@dataclass(frozen=True)
class SwapBase:
    base_id: str
    image: str
    description: str
    topic: str
    ar: str = ""
    source_value: str = "White"


@dataclass(frozen=True)
class PairTrial:
    pair_id: str
    attribute: str
    topic: str
    variant_a: Variant
    variant_b: Variant
    ar: str = ""

    def __post_init__(self):
        a, b = self.variant_a, self.variant_b
        if a.value == b.value:
            raise InvalidInputError(f"{self.pair_id}: both variants carry value {a.value!r}")
        if a.provenance.get("base_id") != b.provenance.get("base_id"):
            raise InvalidInputError(f"{self.pair_id}: variants derive from different base ads")

    @property
    def values(self) -> tuple:
        return self.variant_a.value, self.variant_b.value

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, row: dict) -> "PairTrial":
        return cls(row["pair_id"], row["attribute"], row["topic"], Variant(**row["variant_a"]),
                   Variant(**row["variant_b"]), row.get("ar", ""))


class SubstitutionTextEditor:
    """Offline text editor that carries out "replace the 'X' with 'Y'" instructions literally."""

    _INSTR = re.compile(r"replace the '([^']+)' with '([^']+)'")

    def complete(self, prompt: str) -> str:
        head, _, description = prompt.partition("\n")
        m = self._INSTR.search(head)
        if not m:
            raise InvalidInputError("edit instruction not understood")
        src, dst = m.groups()
        return re.sub(rf"\b{re.escape(src)}\b", dst, description, flags=re.IGNORECASE)


class TaggingImageEditor:
    """Offline image editor: returns a synthetic reference naming the requested edit."""

    def edit(self, image: str, instruction: str) -> str:
        return f"{image}#edit={instruction}"


def _edit_prompts(attribute: str, source: str, value: str, description: str) -> tuple:
    if attribute == "race":
        return (render(load_prompt("edit_image_race"), race=value),
                render(load_prompt("edit_description_race"), race=value, description=description))
    return (render(load_prompt("edit_image_gender"), source=source, gender=value),
            render(load_prompt("edit_description_gender"), source=source, gender=value, description=description))


def build_swap_pairs(base: SwapBase, values, image_editor, text_editor, attribute: str = "race") -> list:
    """Edit ``base`` into one variant per value and return all C(n, 2) unordered pairs.

    The base itself stands in for its own ``source_value``. A variant whose edit fails is
    logged and every pair involving it is skipped.
    """
    values = list(dict.fromkeys(values))
    if attribute not in ("race", "gender"):
        raise ConfigurationError(f"attribute must be 'race' or 'gender', not {attribute!r}")
    allowed = RACES if attribute == "race" else GENDERS
    bad = [v for v in values + [base.source_value] if v not in allowed]
    if bad:
        raise ConfigurationError(f"values {bad} outside the {attribute} label set {allowed}")
    if attribute == "race" and base.source_value != "White":
        raise ConfigurationError("race edits start from a base ad showing a white person")
    if len(values) < 2:
        raise InvalidInputError("need at least two attribute values to form pairs")

    variants = {}
    for value in values:
        prov = {"base_id": base.base_id, "attribute": attribute, "source": base.source_value, "value": value}
        if value == base.source_value:
            variants[value] = Variant(value, base.image, base.description, {**prov, "edited": False})
            continue
        img_prompt, txt_prompt = _edit_prompts(attribute, base.source_value, value, base.description)
        try:
            image = image_editor.edit(base.image, img_prompt)
            description = text_editor.complete(txt_prompt).strip()
        except Exception as exc:  # one failed edit should not sink the whole base ad
            log.warning("edit %s -> %s failed for %s: %s", base.source_value, value, base.base_id, exc)
            continue
        variants[value] = Variant(value, str(image), description,
                                  {**prov, "edited": True, "image_prompt": img_prompt, "text_prompt": txt_prompt})
    pairs = []
    for a, b in itertools.combinations([v for v in values if v in variants], 2):
        pairs.append(PairTrial(f"{base.base_id}:{a}|{b}", attribute, base.topic, variants[a], variants[b], base.ar))
    return pairs


# ---------------------------------------------------------------- judging

_ANSWER = re.compile(r"Answer\s*:\s*\**\s*\$?\{?\s*([12])\b")


@dataclass(frozen=True)
class JudgeVerdict:
    pair_id: str
    judge_id: str
    modality: str
    order: str
    attribute: str
    topic: str
    winner: str | None
    valid: bool
    pair_values: tuple = ()
    explanation: str = ""
    raw: str = ""

    def to_json(self) -> dict:
        return {**asdict(self), "pair_values": list(self.pair_values)}

    @classmethod
    def from_json(cls, row: dict) -> "JudgeVerdict":
        return cls(**{**row, "pair_values": tuple(row.get("pair_values", ()))})


def parse_answer(raw: str):
    """Index (1 or 2) from the last ``Answer: N`` line, or None if absent."""
    found = _ANSWER.findall(raw)
    return int(found[-1]) if found else None


def judge_request(trial: PairTrial, modality: str, order: str) -> JudgeRequest:
    if modality not in MODALITIES:
        raise ConfigurationError(f"modality must be one of {MODALITIES}")
    if order not in ORDERS:
        raise ConfigurationError(f"order must be one of {ORDERS}")
    first, second = (trial.variant_a, trial.variant_b) if order == "ab" else (trial.variant_b, trial.variant_a)
    if modality == "MLLM":
        prompt = load_prompt("judge_mllm")
    else:
        prompt = render(load_prompt("judge_llm"), Description1=first.description, Description2=second.description)
    return JudgeRequest(prompt, modality, [first.image, second.image], [first.description, second.description],
                        [first.value, second.value])


def judge_pair(trial: PairTrial, judge, order: str, modality: str = "MLLM") -> JudgeVerdict:
    request = judge_request(trial, modality, order)
    try:
        raw = judge.judge(request)
    except TransportError:
        raise
    except Exception as exc:
        raise TransportError(f"judge {judge.id} failed on {trial.pair_id}: {exc}") from exc
    index = parse_answer(raw)
    winner = request.values[index - 1] if index else None
    expl = raw.split("Answer", 1)[0].strip()
    return JudgeVerdict(trial.pair_id, judge.id, modality, order, trial.attribute, trial.topic, winner,
                        winner is not None, trial.values, expl, raw)


def judge_all(trials, judge, modality: str = "MLLM") -> list:
    return [judge_pair(t, judge, order, modality) for t in trials for order in ORDERS]


@dataclass
class WinTable:
    """Win percentages per value. ``rows`` renormalise over valid verdicts of complete pairs;
    ``raw_rows`` divide by every verdict received, invalid ones included."""

    judge_id: str
    modality: str
    attribute: str
    values: tuple
    rows: dict
    raw_rows: dict
    wins: dict
    n_verdicts: dict
    excluded_invalid: int = 0
    excluded_incomplete: int = 0


def aggregate_wins(verdicts, values=None, by_topic: bool | None = None) -> list:
    """Aggregate verdicts into one WinTable per (judge, modality, attribute)."""
    verdicts = list(verdicts)
    if not verdicts:
        raise InvalidInputError("no verdicts to aggregate")
    groups: dict = defaultdict(list)
    for v in verdicts:
        groups[(v.judge_id, v.modality, v.attribute)].append(v)
    tables = []
    for (judge_id, modality, attribute), vs in sorted(groups.items()):
        cols = tuple(values) if values else tuple(sorted({w for v in vs for w in v.pair_values} |
                                                         {v.winner for v in vs if v.winner}))
        per_pair: dict = defaultdict(dict)
        for v in vs:
            if v.order in per_pair[v.pair_id]:
                raise InvalidInputError(f"duplicate {v.order} verdict for {v.pair_id} from {judge_id}")
            per_pair[v.pair_id][v.order] = v
        invalid = sum(not v.valid for v in vs)
        complete, incomplete = [], 0
        for pair_id, orders in per_pair.items():
            if all(o in orders and orders[o].valid for o in ORDERS):
                complete.extend(orders[o] for o in ORDERS)
            else:
                incomplete += 1
        split = by_topic if by_topic is not None else attribute == "gender"
        topics = sorted({v.topic for v in vs}) if split else []
        rows, raw_rows, wins, n = {}, {}, {}, {}
        for topic in topics + ["Overall"]:
            sel = [v for v in complete if topic == "Overall" or v.topic == topic]
            sel_all = [v for v in vs if topic == "Overall" or v.topic == topic]
            c = Counter(v.winner for v in sel)
            wins[topic] = {k: c[k] for k in cols}
            n[topic] = len(sel)
            rows[topic] = {k: (100.0 * c[k] / len(sel) if sel else float("nan")) for k in cols}
            raw_rows[topic] = {k: (100.0 * c[k] / len(sel_all) if sel_all else float("nan")) for k in cols}
        if invalid or incomplete:
            log.info("%s/%s: excluded %d invalid verdicts, %d incomplete pairs", judge_id, modality, invalid, incomplete)
        tables.append(WinTable(judge_id, modality, attribute, cols, rows, raw_rows, wins, n, invalid, incomplete))
    return tables


# ---------------------------------------------------------------- mock judges


def _answer(index: int, note: str = "") -> str:
    return f"Explanation: {note or 'mock judge'}\nAnswer: {index}"


class PositionBiasedJudge:
    """Always prefers the same presentation slot."""

    modality = None

    def __init__(self, index: int = 1):
        self.index = index
        self.id = f"mock-position-{index}"

    def judge(self, request: JudgeRequest) -> str:
        return _answer(self.index, "always the same slot")


class UnanimousJudge:
    """Prefers ``preferred`` whenever it is shown; otherwise falls back to slot 1."""

    def __init__(self, preferred: str):
        self.preferred = preferred
        self.id = f"mock-prefer-{preferred}"

    def judge(self, request: JudgeRequest) -> str:
        if self.preferred in request.values:
            return _answer(request.values.index(self.preferred) + 1)
        return _answer(1)


class RandomJudge:
    """Uniform coin flip per request, seeded."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.id = f"mock-random-{seed}"

    def judge(self, request: JudgeRequest) -> str:
        return _answer(int(self.rng.integers(1, 3)))


class ContentPureJudge:
    """Scores each shown variant by its content alone and picks the higher score, so its
    choice never depends on presentation order."""

    def __init__(self, score=None):
        self.score = score or (lambda image, description: sum(map(ord, f"{image}|{description}")) % 997)
        self.id = "mock-content"

    def judge(self, request: JudgeRequest) -> str:
        s = [self.score(i, d) for i, d in zip(request.images, request.descriptions)]
        if s[0] == s[1]:
            first, second = (f"{request.images[k]}|{request.descriptions[k]}" for k in (0, 1))
            return _answer(1 if first <= second else 2)
        return _answer(1 if s[0] > s[1] else 2)


class GarbledJudge:
    """Never produces a parseable answer; useful for exclusion accounting."""

    id = "mock-garbled"

    def judge(self, request: JudgeRequest) -> str:
        return "I cannot decide."


class FixtureJudge:
    """Replays transcripts keyed by (pair_id, order, modality)."""

    def __init__(self, records, judge_id: str = "fixture"):
        self.id = judge_id
        self._table = {(r["pair_key"], r["modality"]): r["response"] for r in records}

    @staticmethod
    def key(request: JudgeRequest) -> str:
        return "|".join(map(str, request.images)) + "||" + "|".join(request.descriptions)

    def judge(self, request: JudgeRequest) -> str:
        try:
            return self._table[(self.key(request), request.modality)]
        except KeyError:
            raise TransportError("no recorded judge response for this request") from None


def mock_judge(spec: str):
    """Build a mock judge from ``position[:N]``, ``prefer:VALUE``, ``random[:SEED]``, ``content``, ``garbled``."""
    kind, _, arg = spec.partition(":")
    if kind == "position":
        return PositionBiasedJudge(int(arg or 1))
    if kind == "prefer":
        return UnanimousJudge(arg)
    if kind == "random":
        return RandomJudge(int(arg or 0))
    if kind == "content":
        return ContentPureJudge()
    if kind == "garbled":
        return GarbledJudge()
    raise ConfigurationError(f"unknown mock judge {spec!r}")


# ---------------------------------------------------------------- IO


def write_jsonl(items, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_json() if hasattr(item, "to_json") else item, ensure_ascii=False) + "\n")
    return path


def read_jsonl(path) -> list:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def read_profiles(path) -> tuple:
    """CSV ``image_id,topic,face_index,gender,race`` -> (profiles, topics)."""
    profiles, topics = [], {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            topics[row["image_id"]] = row["topic"]
            if row.get("race"):
                profiles.append(DemographicProfile(row["image_id"], int(row.get("face_index") or 0),
                                                   canonical_gender(row["gender"]), canonical_race(row["race"])))
    return profiles, topics
