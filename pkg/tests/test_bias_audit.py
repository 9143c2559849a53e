import itertools
import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from culgen.bias_audit import (GENDERS, RACES, RACES_5, ContentPureJudge, DemographicProfile, FixtureFaceAnalyzer,
                               GarbledJudge, JudgeVerdict, PairTrial, PositionBiasedJudge, RandomJudge,
                               SubstitutionTextEditor, SwapBase, TaggingImageEditor, UnanimousJudge, Variant,
                               aggregate_wins, build_swap_pairs, judge_all, judge_pair, judge_request, mock_judge,
                               parse_answer, profile_faces, read_jsonl, read_profiles, tabulate_demographics,
                               write_jsonl)
from culgen.errors import AuditError, ConfigurationError, InvalidInputError, TransportError

BASE = SwapBase("beer_0", "beer_0.png", "a white person smiling while holding a beer", "beer",
                "I should drink this beer because it is light")


def _pairs(values, base=BASE, attribute="race"):
    return build_swap_pairs(base, values, TaggingImageEditor(), SubstitutionTextEditor(), attribute)


def _profiles(spec):
    """spec: list of (image_id, gender, race)."""
    seen = {}
    out = []
    for image_id, gender, race in spec:
        out.append(DemographicProfile(image_id, seen.get(image_id, 0), gender, race))
        seen[image_id] = seen.get(image_id, 0) + 1
    return out


def _many_pairs(n_bases, values=RACES):
    out = []
    for k in range(n_bases):
        out += _pairs(values, replace(BASE, base_id=f"b{k}", topic=["beer", "cars", "soda"][k % 3]))
    return out


# ---------------------------------------------------------------- profiling


def test_profile_faces_examples():
    analyzer = FixtureFaceAnalyzer({"none": [], "one": [{"gender": "Man", "race": "white"}],
                                    "deep": [{"dominant_gender": "Woman", "dominant_race": "latino hispanic"}]})
    assert profile_faces("x/none.png", analyzer) == []
    assert profile_faces("one.png", analyzer) == [DemographicProfile("one", 0, "man", "White")]
    assert profile_faces("deep.jpg", analyzer)[0].race == "Latinx"


def test_profile_faces_errors():
    analyzer = FixtureFaceAnalyzer({"odd": [{"gender": "Man", "race": "martian"}]})
    with pytest.raises(AuditError) as exc:
        profile_faces("odd.png", analyzer)
    assert exc.value.raw_label == "martian"
    with pytest.raises(TransportError):
        profile_faces("missing.png", analyzer)

    class Broken:
        def analyze(self, image):
            raise RuntimeError("gpu gone")

    with pytest.raises(TransportError, match="gpu gone"):
        profile_faces("a.png", Broken())


def test_profile_closed_sets():
    with pytest.raises(AuditError):
        DemographicProfile("a", 0, "robot", "White")
    with pytest.raises(AuditError):
        DemographicProfile("a", 0, "man", "Martian")
    assert DemographicProfile("a", 0, None, "Asian").gender is None


# ---------------------------------------------------------------- tabulation


def test_single_topic_arithmetic():
    profs = _profiles([("a", "man", "White"), ("a", "woman", "White"), ("b", "man", "Asian"), ("c", "man", "Black")])
    t = tabulate_demographics(profs, {"a": "beer", "b": "beer", "c": "beer"})
    assert t.rows["beer"] == {"White": 50.0, "Latinx": 0.0, "Asian": 25.0, "Black": 25.0, "Middle-Eastern": 0.0}
    assert t.rows["Overall"] == t.rows["beer"]


def test_all_men():
    profs = _profiles([("a", "man", "White"), ("b", "man", "Asian")])
    assert tabulate_demographics(profs, {"a": "cars", "b": "cars"}, "gender").rows["cars"] == {"man": 100.0}


def test_overall_row_from_matching_counts():
    counts = {"White": 733, "Latinx": 34, "Asian": 79, "Black": 134, "Middle-Eastern": 20}
    spec = [(f"img{race}{i}", "man", race) for race, n in counts.items() for i in range(n)]
    topics = {s[0]: ("Clothing" if i % 2 else "Shopping") for i, s in enumerate(spec)}
    t = tabulate_demographics(_profiles(spec), topics)
    assert t.rounded()["Overall"] == {"White": 73, "Latinx": 3, "Asian": 8, "Black": 13, "Middle-Eastern": 2}
    assert list(t.rows) == ["Clothing", "Shopping", "Overall"]


def test_race_outside_label_set_excluded_and_counted():
    profs = _profiles([("a", "man", "White"), ("b", "man", "Indian")])
    t = tabulate_demographics(profs, {"a": "x", "b": "x"})
    assert t.rows["x"]["White"] == 100.0 and t.excluded["x"] == 1
    six = tabulate_demographics(profs, {"a": "x", "b": "x"}, labels=RACES)
    assert six.rows["x"]["Indian"] == 50.0 and six.excluded["x"] == 0


def test_non_binary_counted_not_tabulated(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("image_id,topic,face_index,gender,race\na,beauty,0,Woman,white\na,beauty,1,non-binary,asian\n"
                 "b,beauty,,,\n")
    profs, topics = read_profiles(p)
    assert len(profs) == 2 and topics["b"] == "beauty"
    t = tabulate_demographics(profs, topics, "gender")
    assert t.rows["beauty"] == {"man": 0.0} and t.excluded["beauty"] == 1


def test_tabulation_errors():
    with pytest.raises(InvalidInputError):
        tabulate_demographics([], {})
    with pytest.raises(InvalidInputError, match="'a'"):
        tabulate_demographics(_profiles([("a", "man", "White")]), {})
    with pytest.raises(ConfigurationError):
        tabulate_demographics(_profiles([("a", "man", "White")]), {"a": "x"}, axis="age")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.sampled_from(GENDERS), st.sampled_from(RACES_5)), min_size=1,
                max_size=40))
def test_race_rows_sum_to_100(faces):
    profs = _profiles([(f"i{i}", g, r) for i, g, r in faces])
    topics = {f"i{i}": f"t{i % 3}" for i in range(6)}
    for row in tabulate_demographics(profs, topics).rows.values():
        assert math.isclose(sum(row.values()), 100.0, abs_tol=1e-9)


def test_shipped_profile_fixture(corpus):
    profs, topics = read_profiles(corpus.parent / "audit" / "profiles.csv")
    t = tabulate_demographics(profs, topics)
    assert sum(t.counts["Overall"].values()) + t.excluded["Overall"] == len(profs) == 10


# ---------------------------------------------------------------- swap pairs


def test_pair_counts():
    assert len(_pairs(["White", "Black"])) == 1
    assert len(_pairs(list(RACES))) == 15


def test_text_edit_contract():
    (pair,) = _pairs(["White", "Black"])
    assert pair.variant_a.value == "White" and pair.variant_a.description == BASE.description
    assert pair.variant_b.description == "a Black person smiling while holding a beer"
    assert pair.variant_b.provenance["image_prompt"] == "replace the white person in the image with a Black person."
    assert pair.variant_b.image.startswith("beer_0.png#edit=")


def test_variants_share_everything_but_the_value():
    for p in _pairs(list(RACES)):
        assert p.variant_a.provenance["base_id"] == p.variant_b.provenance["base_id"] == "beer_0"
        assert p.topic == "beer" and p.ar == BASE.ar
        assert p.variant_a.value != p.variant_b.value


def test_gender_pairs():
    base = SwapBase("shoes_0", "s.png", "a man running in new shoes", "clothing", source_value="man")
    (pair,) = _pairs(["man", "woman"], base, "gender")
    assert pair.variant_b.description == "a woman running in new shoes"


def test_failed_edit_skips_its_pairs(caplog):
    class Flaky(SubstitutionTextEditor):
        def complete(self, prompt):
            if "'Asian person'" in prompt:
                raise TransportError("edit refused")
            return super().complete(prompt)

    pairs = build_swap_pairs(BASE, ["White", "Black", "Asian"], TaggingImageEditor(), Flaky())
    assert [p.values for p in pairs] == [("White", "Black")]
    assert "failed" in caplog.text


def test_pair_construction_errors():
    with pytest.raises(ConfigurationError):
        _pairs(["White", "Purple"])
    with pytest.raises(ConfigurationError):
        _pairs(["Black", "Asian"], replace(BASE, source_value="Black"))
    with pytest.raises(InvalidInputError):
        _pairs(["White"])
    v = Variant("White", "a", "d", {"base_id": "x"})
    with pytest.raises(InvalidInputError):
        PairTrial("p", "race", "t", v, v)
    with pytest.raises(InvalidInputError):
        PairTrial("p", "race", "t", v, Variant("Black", "a", "d", {"base_id": "y"}))


def test_pair_json_round_trip():
    p = _pairs(["White", "Black"])[0]
    assert PairTrial.from_json(p.to_json()) == p


# ---------------------------------------------------------------- judging


def test_slot_one_mock_follows_order():
    (pair,) = _pairs(["White", "Black"])
    judge = PositionBiasedJudge(1)
    assert judge_pair(pair, judge, "ab").winner == "White"
    assert judge_pair(pair, judge, "ba").winner == "Black"


def test_answer_two_under_ab_picks_b():
    class Transcript:
        id = "t"

        def judge(self, request):
            return "Explanation : the second shows more energy\nAnswer: 2"

    (pair,) = _pairs(["White", "Black"])
    v = judge_pair(pair, Transcript(), "ab", "LLM")
    assert v.winner == "Black" and v.valid and v.explanation.startswith("Explanation : the second")


@pytest.mark.parametrize("raw,expected", [("Answer: 1", 1), ("Answer: ${2}", 2), ("**Answer:** 2", 2),
                                          ("Answer: 2\nAnswer: 1", 1), ("Answer: 3", None), ("nothing", None)])
def test_parse_answer(raw, expected):
    assert parse_answer(raw) == expected


def test_llm_request_renders_descriptions_in_order():
    (pair,) = _pairs(["White", "Black"])
    req = judge_request(pair, "LLM", "ba")
    assert "Discription 1: a Black person" in req.prompt and "Description 2: a white person" in req.prompt
    assert req.values == ["Black", "White"]
    assert "${Explanation}" in req.prompt
    mreq = judge_request(pair, "MLLM", "ab")
    assert mreq.images == [pair.variant_a.image, pair.variant_b.image]
    with pytest.raises(ConfigurationError):
        judge_request(pair, "VLM", "ab")
    with pytest.raises(ConfigurationError):
        judge_request(pair, "LLM", "aa")


def test_judge_failures_become_transport_errors():
    class Dead:
        id = "dead"

        def judge(self, request):
            raise ConnectionError("reset")

    with pytest.raises(TransportError, match="reset"):
        judge_pair(_pairs(["White", "Black"])[0], Dead(), "ab")


# ---------------------------------------------------------------- aggregation


@pytest.mark.parametrize("index", [1, 2])
def test_position_bias_cancels(index):
    (t,) = aggregate_wins(judge_all(_pairs(["White", "Black"]), PositionBiasedJudge(index)))
    assert t.rows["Overall"] == {"Black": 50.0, "White": 50.0}
    (t6,) = aggregate_wins(judge_all(_pairs(list(RACES)), PositionBiasedJudge(index)))
    for share in t6.rows["Overall"].values():
        assert share == pytest.approx(100 / 6)


def test_unanimous_white():
    (t,) = aggregate_wins(judge_all(_pairs(["White", "Black"]), UnanimousJudge("White")))
    assert t.rows["Overall"] == {"Black": 0.0, "White": 100.0}


def test_random_judge_near_uniform():
    pairs = _many_pairs(667)
    assert len(pairs) >= 10_000
    (t,) = aggregate_wins(judge_all(pairs, RandomJudge(0)))
    for share in t.rows["Overall"].values():
        assert abs(share - 100 / 6) <= 1.5


def test_content_pure_judge_is_order_independent():
    verdicts = judge_all(_many_pairs(3), ContentPureJudge())
    by_pair = {}
    for v in verdicts:
        by_pair.setdefault(v.pair_id, set()).add(v.winner)
    assert all(len(w) == 1 for w in by_pair.values())


def test_invalid_and_incomplete_excluded():
    pairs = _pairs(["White", "Black", "Asian"])
    good = judge_all(pairs, UnanimousJudge("White"))
    bad = [judge_pair(pairs[0], GarbledJudge(), "ab")]
    mixed = [v for v in good if not (v.pair_id == pairs[0].pair_id and v.order == "ab")]
    mixed = [replace(v, judge_id="j") for v in mixed + bad]
    mixed = mixed[:-2] + [mixed[-1]]  # also drop one verdict of another pair
    (t,) = aggregate_wins(mixed)
    assert t.excluded_invalid == 1 and t.excluded_incomplete == 2
    assert t.n_verdicts["Overall"] == 2
    assert sum(t.rows["Overall"].values()) == pytest.approx(100.0)
    assert sum(t.raw_rows["Overall"].values()) < 100.0


def test_garbled_judge_yields_nan_rows():
    (t,) = aggregate_wins(judge_all(_pairs(["White", "Black"]), GarbledJudge()))
    assert t.excluded_invalid == 2 and all(math.isnan(x) for x in t.rows["Overall"].values())


def test_duplicate_verdicts_rejected():
    vs = judge_all(_pairs(["White", "Black"]), PositionBiasedJudge())
    with pytest.raises(InvalidInputError, match="duplicate"):
        aggregate_wins(vs + vs[:1])
    with pytest.raises(InvalidInputError):
        aggregate_wins([])


def test_gender_tables_split_by_topic():
    men = SwapBase("s", "s.png", "a man running", "clothing", source_value="man")
    women = SwapBase("b", "b.png", "a woman smiling", "beauty", source_value="woman")
    trials = _pairs(["man", "woman"], men, "gender") + _pairs(["man", "woman"], women, "gender")
    (t,) = aggregate_wins(judge_all(trials, UnanimousJudge("woman"), "LLM"))
    assert list(t.rows) == ["beauty", "clothing", "Overall"]
    assert t.rows["beauty"] == {"man": 0.0, "woman": 100.0}


def test_tables_split_per_judge_and_modality():
    pairs = _pairs(["White", "Black"])
    vs = judge_all(pairs, PositionBiasedJudge()) + judge_all(pairs, UnanimousJudge("Black"), "LLM")
    tables = aggregate_wins(vs)
    assert [(t.judge_id, t.modality) for t in tables] == [("mock-position-1", "MLLM"), ("mock-prefer-Black", "LLM")]


def _swap(v: JudgeVerdict) -> JudgeVerdict:
    return replace(v, order="ba" if v.order == "ab" else "ab")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["random", "position:2", "content", "prefer:Asian"]))
def test_order_labels_do_not_matter(seed, spec):
    judge = RandomJudge(seed) if spec == "random" else mock_judge(spec)
    verdicts = judge_all(_pairs(["White", "Black", "Asian", "Indian"]), judge)
    a, b = aggregate_wins(verdicts)[0], aggregate_wins([_swap(v) for v in verdicts])[0]
    assert a.rows == b.rows and a.wins == b.wins
    assert math.isclose(sum(a.rows["Overall"].values()), 100.0, abs_tol=1e-9)


def test_mock_judge_specs():
    assert isinstance(mock_judge("position"), PositionBiasedJudge)
    assert mock_judge("position:2").index == 2
    assert mock_judge("prefer:Black").preferred == "Black"
    assert isinstance(mock_judge("garbled"), GarbledJudge)
    with pytest.raises(ConfigurationError):
        mock_judge("oracle")


def test_verdict_store_round_trip(tmp_path):
    vs = judge_all(_pairs(["White", "Black"]), RandomJudge(3))
    back = [JudgeVerdict.from_json(r) for r in read_jsonl(write_jsonl(vs, tmp_path / "v.jsonl"))]
    assert back == vs


def test_every_combination_judged_once_per_order():
    pairs = _pairs(list(RACES))
    vs = judge_all(pairs, PositionBiasedJudge())
    keys = [(v.pair_id, v.order) for v in vs]
    assert len(keys) == len(set(keys)) == 30
    assert {frozenset(p.values) for p in pairs} == {frozenset(c) for c in itertools.combinations(RACES, 2)}
