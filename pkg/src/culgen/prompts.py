"""Prompt templates stored as text resources and a slot-only renderer.

Templates keep their literal ``${...}`` answer-format markers; only the named
``{slot}`` placeholders passed to :func:`render` are substituted.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .embeddings import ActionReason

TEMPLATES = (
    "generate_ar",
    "generate_cultural",
    "edit_image_race",
    "edit_description_race",
    "judge_llm",
    "judge_mllm",
    "edit_image_gender",
    "edit_description_gender",
    "annotate_country",
)


@lru_cache(maxsize=None)
def load(name: str) -> str:
    if name not in TEMPLATES:
        raise KeyError(f"unknown prompt template {name!r}")
    text = resources.files("culgen").joinpath("resources", "prompts", f"{name}.txt").read_text(encoding="utf-8")
    lines = text.split("\n")
    while lines and lines[0].startswith("#"):
        lines.pop(0)
    text = "\n".join(lines)
    return text[:-1] if text.endswith("\n") else text


def render(template: str, **slots) -> str:
    def sub(m):
        key = m.group(1)
        return str(slots[key]) if key in slots else m.group(0)

    return re.sub(r"(?<!\$)\{([A-Za-z][A-Za-z0-9_]*)\}", sub, template)


def ar_prompt(ar: ActionReason) -> str:
    return render(load("generate_ar"), AR=ar.render())


def cultural_prompt(ar: ActionReason, country: str) -> str:
    return render(load("generate_cultural"), AR=ar.render(), country=country)
