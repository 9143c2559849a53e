import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from culgen.annotator import (AnnotationResult, annotate, annotate_many, distribution_report, parse_response,
                              read_annotations, read_gold, score_annotations, share, write_annotations)
from culgen.clients import FixtureVLMClient
from culgen.countries import CountryVocabulary, RegionMap
from culgen.errors import AnnotationError, InvalidInputError, NotFoundError, TransportError

VOCAB = CountryVocabulary.default()
REGIONS = RegionMap.default()


class Scripted:
    def __init__(self, *responses):
        self.responses = list(responses)
        self.calls = 0

    def query(self, image, instruction):
        self.calls += 1
        r = self.responses.pop(0)
        if isinstance(r, Exception):
            raise r
        return r


def _ann(image_id, *countries):
    return AnnotationResult(image_id, tuple(countries))


# ---------------------------------------------------------------- parsing


def test_inline_numbered_list():
    assert parse_response("1. France 2. Belgium") == (("France", "Belgium"), ())


def test_multiline_with_components():
    raw = "1) Mexico\n2) Spain.\nComponents: papel picado, cacti , \nextra line"
    assert parse_response(raw) == (("Mexico", "Spain"), ("papel picado", "cacti"))


def test_aliases_and_duplicates_collapse():
    assert parse_response("1. USA 2. United States 3. UK")[0] == ("United States", "United Kingdom")


def test_five_countries_truncated_with_warning(caplog):
    countries, _ = parse_response("1. France 2. Belgium 3. Spain 4. Italy 5. Germany")
    assert countries == ("France", "Belgium", "Spain")
    assert "keeping the first 3" in caplog.text


def test_unknown_country_lists_nearest():
    with pytest.raises(AnnotationError) as exc:
        parse_response("1. Fraance")
    assert "France" in exc.value.candidates and "France" in str(exc.value)
    assert exc.value.raw_response == "1. Fraance"


@pytest.mark.parametrize("raw", ["", "no idea", "Components: a, b"])
def test_unparseable_keeps_raw(raw):
    with pytest.raises(AnnotationError) as exc:
        parse_response(raw)
    assert exc.value.raw_response == raw


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_parser_never_returns_empty(raw):
    try:
        countries, _ = parse_response(raw)
    except AnnotationError:
        return
    assert 1 <= len(countries) <= 3


def test_result_invariants():
    with pytest.raises(AnnotationError):
        AnnotationResult("x", ())
    with pytest.raises(AnnotationError):
        AnnotationResult("x", ("A", "B", "C", "D"))


# ---------------------------------------------------------------- annotate


def test_annotate_with_fixture_client(corpus):
    client = FixtureVLMClient.load(corpus.parent / "annotation" / "vlm_responses.jsonl")
    res = annotate(corpus / "images" / "china_0.png", client)
    assert res.image_id == "china_0" and res.countries[0] == "China"
    assert "red lanterns" in res.components
    with pytest.raises(NotFoundError):
        annotate(corpus / "images" / "china_0.png", client, instruction="something else")


def test_transport_failures_are_retried(monkeypatch):
    monkeypatch.setattr("time.sleep", lambda s: None)
    client = Scripted(TransportError("503"), RuntimeError("boom"), "1. Japan")
    assert annotate("img.png", client).countries == ("Japan",)
    assert client.calls == 3
    with pytest.raises(TransportError):
        annotate("img.png", Scripted(*[TransportError("x")] * 3))


def test_annotate_many_preserves_order():
    class Echo:
        def query(self, image, instruction):
            return f"1. {image}"

    out = annotate_many([(str(i), c) for i, c in enumerate(["Peru", "Chad", "Fiji", "Iran", "Cuba"])
                         if c in VOCAB], Echo(), max_workers=3)
    assert [a.countries[0] for a in out] == [c for c in ["Peru", "Chad", "Fiji", "Iran", "Cuba"] if c in VOCAB]


# ---------------------------------------------------------------- metrics


def test_hand_enumerated_four_case_fixture():
    preds = [_ann("a", "France", "Belgium"),   # top-1 hit
             _ann("b", "Mexico"),              # top-1 hit
             _ann("c", "Spain", "Mexico"),     # hit at rank 2
             _ann("d", "Japan", "China")]      # miss
    gold = {"a": "France", "b": "Mexico", "c": "Mexico", "d": "South Korea"}
    assert score_annotations(preds, gold) == {"recall": 0.75, "p_at_1": 0.5, "n": 4}


def test_all_correct_and_all_wrong():
    preds = [_ann("a", "France"), _ann("b", "Peru")]
    assert score_annotations(preds, {"a": "France", "b": "Peru"})["recall"] == 1.0
    out = score_annotations(preds, {"a": "Chad", "b": "Fiji"})
    assert (out["recall"], out["p_at_1"]) == (0.0, 0.0)


def test_missing_gold_names_ids():
    with pytest.raises(InvalidInputError, match="'b'"):
        score_annotations([_ann("a", "France"), _ann("b", "Peru")], {"a": "France"})
    with pytest.raises(InvalidInputError):
        score_annotations([], {})


def test_grouping_counts_same_region_hits():
    preds = [_ann("a", "Belgium"), _ann("b", "Japan")]
    gold = {"a": "France", "b": "Peru"}
    assert score_annotations(preds, gold)["recall"] == 0.0
    grouped = score_annotations(preds, gold, REGIONS)
    assert grouped["recall"] == 0.5 and grouped["p_at_1"] == 0.5


_names = st.sampled_from(VOCAB.names)


@st.composite
def _fixture(draw):
    n = draw(st.integers(1, 12))
    preds, gold = [], {}
    for i in range(n):
        cs = draw(st.lists(_names, min_size=1, max_size=3, unique=True))
        preds.append(AnnotationResult(f"i{i}", tuple(cs)))
        gold[f"i{i}"] = draw(st.one_of(_names, st.sampled_from(cs)))
    return preds, gold


@settings(max_examples=100, deadline=None)
@given(_fixture(), st.randoms(use_true_random=False))
def test_metric_properties(fixture, rnd):
    preds, gold = fixture
    plain = score_annotations(preds, gold)
    grouped = score_annotations(preds, gold, REGIONS)
    assert plain["p_at_1"] <= plain["recall"]
    assert grouped["recall"] >= plain["recall"]
    shuffled = preds[:]
    rnd.shuffle(shuffled)
    assert score_annotations(shuffled, gold) == plain


# ---------------------------------------------------------------- distribution


def test_distribution_examples():
    assert distribution_report([_ann(str(i), "United States") for i in range(3)]) == {"United States": 3}
    tally = ["China"] * 4 + ["France"] * 3 + ["Peru"] * 2 + ["Chad"]
    anns = [_ann(str(i), c, "Japan") for i, c in enumerate(tally)]
    counts = distribution_report(anns)
    assert counts == {"China": 4, "France": 3, "Peru": 2, "Chad": 1}
    assert list(counts) == ["China", "France", "Peru", "Chad"]
    assert sum(counts.values()) == len(anns)
    with pytest.raises(InvalidInputError):
        distribution_report([])


def test_western_share_is_a_ratio():
    counts = {"United States": 9000, "United Kingdom": 700, "Canada": 400, "Australia": 235, "China": 2837}
    assert share(counts, ["United States", "United Kingdom", "Canada", "Australia"]) == pytest.approx(
        10335 / 13172)
    assert round(100 * 10335 / 13172) == 78


# ---------------------------------------------------------------- io


def test_annotation_store_round_trip(tmp_path):
    anns = [AnnotationResult("a", ("France",), ("wine",), "1. France\nComponents: wine"), _ann("b", "Peru", "Chad")]
    assert read_annotations(write_annotations(anns, tmp_path / "x" / "a.jsonl")) == anns


def test_read_gold_canonicalises(tmp_path):
    p = tmp_path / "gold.csv"
    with open(p, "w", newline="") as fh:
        csv.writer(fh).writerows([["image_id", "country"], ["a", "usa"], ["b", "UAE"]])
    assert read_gold(p) == {"a": "United States", "b": "United Arab Emirates"}


def test_shipped_fixture_metrics(corpus):
    ann = corpus.parent / "annotation"
    client = FixtureVLMClient.load(ann / "vlm_responses.jsonl")
    gold = read_gold(ann / "gold.csv")
    preds = annotate_many([(i, corpus / "images" / f"{i}.png") for i in gold], client)
    m = score_annotations(preds, gold)
    assert (m["n"], round(m["recall"], 4), round(m["p_at_1"], 4)) == (23, 0.913, 0.7391)
