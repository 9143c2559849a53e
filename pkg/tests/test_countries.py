import pytest

from culgen.countries import CountryVocabulary, RegionMap, canonical_country
from culgen.errors import InvalidInputError, NotFoundError


@pytest.mark.parametrize("raw,canon", [("usa", "United States"), ("U.S.A.", "United States"),
                                       ("the Netherlands", "Netherlands"), ("UAE", "United Arab Emirates"),
                                       ("  south   africa ", "South Africa"), ("México", "Mexico")])
def test_aliases(raw, canon):
    assert canonical_country(raw) == canon


def test_unknown_name_suggests_nearest():
    with pytest.raises(NotFoundError) as exc:
        canonical_country("Fraance")
    assert "France" in str(exc.value)
    assert CountryVocabulary.default().nearest("Fraance")[0] == "France"


def test_vocabulary_membership():
    vocab = CountryVocabulary.default()
    assert "japan" in vocab and "Atlantis" not in vocab
    assert len(vocab.names) == len(set(vocab.names))


def test_region_map_total_over_vocabulary(tmp_path):
    vocab = CountryVocabulary.default()
    regions = RegionMap.default()
    regions.check_total(vocab.names)
    regions.save(tmp_path / "r.json")
    assert RegionMap.load(tmp_path / "r.json").mapping == regions.mapping


def test_region_map_gaps():
    r = RegionMap({"France": "Western"})
    with pytest.raises(InvalidInputError, match="Japan"):
        r.check_total(["France", "Japan"])
    with pytest.raises(NotFoundError):
        r["Japan"]
