import hashlib

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from PIL import Image

from culgen.embeddings import (ActionReason, Embedding, HashTextEncoder, PixelStatsImageEncoder, concat_sequences,
                               encode_components, encode_image, encode_text, load_image)
from culgen.errors import ImageReadError, InvalidInputError
from oracles import pixel_stats_oracle


def _emb(rows, enc="t"):
    return Embedding(np.asarray(rows, dtype=float), enc)


# ---------------------------------------------------------------- text


def test_same_text_twice_is_bit_identical():
    enc = HashTextEncoder(16)
    assert encode_text("drink this beer", enc) == encode_text("drink this beer", enc)


def test_single_word_gives_one_finite_row():
    e = encode_text("beer", HashTextEncoder(8))
    assert e.rows.shape == (1, 8)
    assert np.all(np.isfinite(e.rows))


def test_per_token_length_matches_token_count():
    text = "Drink  this\tbeer"
    e = encode_text(text, HashTextEncoder(8))
    assert e.length == len(text.split()) == 3


def test_hash_rows_match_independent_derivation():
    enc = HashTextEncoder(8, seed=3)
    digest = hashlib.blake2b("\x1f".join(["hash-text", "3", "beer"]).encode(), digest_size=8).digest()
    expected = np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(8) / np.sqrt(8)
    np.testing.assert_array_equal(encode_text("BEER", enc).rows[0], expected)


def test_pooled_encoder_is_mean_of_tokens():
    per, pooled = HashTextEncoder(8), HashTextEncoder(8, per_token=False)
    np.testing.assert_allclose(encode_text("a b c", pooled).rows[0], encode_text("a b c", per).rows.mean(axis=0))
    assert per.id != pooled.id


def test_empty_text_rejected():
    with pytest.raises(InvalidInputError):
        encode_text("   ", HashTextEncoder())


def test_embedding_is_read_only_copy():
    src = np.zeros((2, 3))
    e = Embedding(src)
    src[0, 0] = 5.0
    assert e.rows[0, 0] == 0.0
    with pytest.raises(ValueError):
        e.rows[0, 0] = 1.0


@pytest.mark.parametrize("bad", [np.zeros((0, 3)), np.zeros((2, 0)), np.array([[np.nan, 1.0]])])
def test_embedding_rejects_bad_rows(bad):
    with pytest.raises(InvalidInputError):
        Embedding(bad)


# ---------------------------------------------------------------- images


def test_same_image_twice_identical(corpus):
    enc = PixelStatsImageEncoder(16)
    path = corpus / "images" / "china_0.png"
    assert encode_image(path, enc) == encode_image(path, enc)


def test_black_pixel_encodes_to_zero(tmp_path):
    p = tmp_path / "black.png"
    Image.new("RGB", (1, 1)).save(p)
    e = encode_image(p, PixelStatsImageEncoder(8, grid=2))
    assert e.length == 4
    assert np.all(e.rows == 0.0)


def test_fixture_image_matches_brute_force_oracle(corpus):
    enc = PixelStatsImageEncoder(16, grid=2)
    path = corpus / "images" / "france_1.png"
    pixels = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    np.testing.assert_allclose(encode_image(path, enc).rows, pixel_stats_oracle(pixels, 2, enc.mixing), atol=1e-12)


def test_array_and_file_inputs_agree(corpus):
    enc = PixelStatsImageEncoder(16)
    path = corpus / "images" / "mexico_2.png"
    assert encode_image(path, enc).rows.tolist() == encode_image(load_image(path), enc).rows.tolist()


def test_unreadable_image_reports_path(tmp_path):
    bad = tmp_path / "not_an_image.png"
    bad.write_text("hello")
    with pytest.raises(ImageReadError) as err:
        encode_image(bad, PixelStatsImageEncoder())
    assert str(bad) in str(err.value)
    with pytest.raises(ImageReadError):
        encode_image(tmp_path / "missing.png", PixelStatsImageEncoder())


def test_image_array_shape_checked():
    with pytest.raises(InvalidInputError):
        load_image(np.zeros((4, 4, 4)))


# ---------------------------------------------------------------- components and concat


def test_components_joined_or_split():
    enc = HashTextEncoder(8)
    joined = encode_components(["red lanterns", "dragon"], enc)
    assert joined == encode_text("red lanterns, dragon", enc)
    split = encode_components(["red lanterns", "dragon"], enc, per_component=True)
    assert split.length == 3
    with pytest.raises(InvalidInputError):
        encode_components(["", "  "], enc)


def test_concat_single_part_unchanged():
    e = _emb([[1.0, 2.0]])
    assert concat_sequences([e]) is e


def test_concat_lengths_and_order():
    a, b = _emb(np.arange(6).reshape(3, 2)), _emb(np.arange(4).reshape(2, 2) + 10)
    out = concat_sequences([a, b])
    assert out.length == 5
    np.testing.assert_array_equal(out.rows[:3], a.rows)
    parts = [_emb(np.full((n, 2), n)) for n in (1, 4, 2)]
    out = concat_sequences(parts)
    assert out.length == 7
    assert out.rows[:, 0].tolist() == [1, 4, 4, 4, 4, 2, 2]


def test_concat_dim_mismatch_names_indices():
    with pytest.raises(InvalidInputError, match=r"\[1, 3\]"):
        concat_sequences([_emb([[1, 2]]), _emb([[1, 2, 3]]), _emb([[1, 2]]), _emb([[1]])])
    with pytest.raises(InvalidInputError):
        concat_sequences([])


_rows = st.integers(1, 4).flatmap(lambda n: st.lists(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
                                                      min_size=n, max_size=n))


@settings(max_examples=60, deadline=None)
@given(_rows, _rows, _rows)
def test_concat_associative_and_additive(r1, r2, r3):
    a, b, c = _emb(r1), _emb(r2), _emb(r3)
    left = concat_sequences([concat_sequences([a, b]), c])
    right = concat_sequences([a, concat_sequences([b, c])])
    assert left.length == a.length + b.length + c.length
    np.testing.assert_array_equal(left.rows, right.rows)
    np.testing.assert_array_equal(left.rows, np.vstack([a.rows, b.rows, c.rows]))
    np.testing.assert_array_equal(a.rows, np.asarray(r1, dtype=float))  # inputs untouched


_words = st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), min_size=1, max_size=30)


@settings(max_examples=200, deadline=None)
@given(_words, _words)
def test_action_reason_round_trip(action, reason):
    assume(action.strip() and reason.strip())
    assume(" because " not in action and " because " not in reason)
    assume(action == action.strip() and reason == reason.strip())
    assume(not (action + " ").endswith(" because") and not reason.startswith("because "))
    ar = ActionReason(action, reason)
    assert ActionReason.parse(ar.render()) == ar


def test_action_reason_render_and_errors():
    ar = ActionReason("drink this beer", "it is as light as a feather")
    assert ar.render() == "I should drink this beer because it is as light as a feather"
    with pytest.raises(InvalidInputError):
        ActionReason(" ", "x")
    with pytest.raises(InvalidInputError):
        ActionReason.parse("buy it now")
