"""Canonical country vocabulary, alias resolution and cultural-region grouping."""

from __future__ import annotations

import difflib
import json
import re
import unicodedata
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import InvalidInputError, NotFoundError


def _key(name: str) -> str:
    name = unicodedata.normalize("NFKD", name).encode("ascii", "ignore").decode("ascii")
    name = re.sub(r"[^a-z0-9 ]+", " ", name.casefold())
    name = re.sub(r"^the ", "", " ".join(name.split()))
    return name


def _read_resource(name: str):
    return json.loads(resources.files("culgen").joinpath("resources", name).read_text(encoding="utf-8"))


class CountryVocabulary:
    def __init__(self, entries: dict):
        self.entries = dict(entries)
        self._lookup = {}
        for name, info in self.entries.items():
            for alias in [name, *info.get("aliases", ())]:
                self._lookup[_key(alias)] = name

    @classmethod
    def default(cls) -> "CountryVocabulary":
        return _default_vocabulary()

    @property
    def names(self) -> list[str]:
        return list(self.entries)

    def __contains__(self, name) -> bool:
        return _key(name) in self._lookup

    def canonical(self, name: str) -> str:
        hit = self._lookup.get(_key(name))
        if hit is None:
            near = self.nearest(name)
            raise NotFoundError(f"unknown country {name!r}; nearest canonical names: {near}")
        return hit

    def nearest(self, name: str, n: int = 3) -> list[str]:
        keys = difflib.get_close_matches(_key(name), list(self._lookup), n=n * 3, cutoff=0.5)
        out = []
        for k in keys:
            canon = self._lookup[k]
            if canon not in out:
                out.append(canon)
        return out[:n]

    def region_map(self) -> "RegionMap":
        return RegionMap({name: info["region"] for name, info in self.entries.items()})


@lru_cache(maxsize=1)
def _default_vocabulary() -> CountryVocabulary:
    return CountryVocabulary(_read_resource("countries.json"))


def canonical_country(name: str) -> str:
    return _default_vocabulary().canonical(name)


class RegionMap:
    """Country to cultural-region label; must cover every country it is asked about."""

    def __init__(self, mapping: dict):
        self.mapping = dict(mapping)

    def __getitem__(self, country: str) -> str:
        try:
            return self.mapping[country]
        except KeyError:
            raise NotFoundError(f"region map has no entry for {country!r}") from None

    def check_total(self, countries) -> None:
        missing = sorted(set(countries) - set(self.mapping))
        if missing:
            raise InvalidInputError(f"region map is missing countries: {missing}")

    @classmethod
    def default(cls) -> "RegionMap":
        return _default_vocabulary().region_map()

    @classmethod
    def load(cls, path) -> "RegionMap":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.mapping, indent=1, sort_keys=True) + "\n", encoding="utf-8")
