"""Regenerate offline fixtures for the annotate and audit commands.

* fixtures/annotation/vlm_responses.jsonl: replayable VLM answers for every corpus image
* fixtures/annotation/gold.csv: gold target country per image
* fixtures/audit/bases.jsonl: base ads for race and gender swap pairs
* fixtures/audit/profiles.csv: face profiles for a handful of generated images

The responses are synthetic: most list the gold country first, some put it second
or omit it, so recall and P@1 differ.
"""

import csv
import hashlib
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from culgen.prompts import load  # noqa: E402

CORPUS = ROOT / "fixtures" / "corpus"
ANN = ROOT / "fixtures" / "annotation"
AUD = ROOT / "fixtures" / "audit"

NEIGHBOUR = {"China": "Japan", "France": "Belgium", "South Africa": "Namibia",
             "United Arab Emirates": "Saudi Arabia", "Mexico": "Spain", "Japan": "China"}


def main():
    ANN.mkdir(parents=True, exist_ok=True)
    AUD.mkdir(parents=True, exist_ok=True)
    instruction = load("annotate_country")
    ins_sha = hashlib.sha256(instruction.encode()).hexdigest()
    rows = [json.loads(line) for line in (CORPUS / "db_manifest.jsonl").read_text().splitlines() if line.strip()]
    with open(ANN / "vlm_responses.jsonl", "w") as fh, open(ANN / "gold.csv", "w", newline="") as gf:
        gold = csv.writer(gf)
        gold.writerow(["image_id", "country"])
        for i, row in enumerate(rows):
            country, other = row["country"], NEIGHBOUR[row["country"]]
            if i % 5 == 3:
                countries = [other, country]
            elif i % 7 == 6:
                countries = [other]
            else:
                countries = [country, other]
            listing = " ".join(f"{k}. {c}" for k, c in enumerate(countries, start=1))
            response = f"{listing}\nComponents: {', '.join(row['components'])}"
            img_sha = hashlib.sha256((CORPUS / row["image"]).read_bytes()).hexdigest()
            fh.write(json.dumps({"instruction_sha256": ins_sha, "image_sha256": img_sha,
                                 "image": row["image"], "response": response}) + "\n")
            gold.writerow([row["id"], country])

    bases = [
        {"base_id": "beer_0", "image": "beer_0.png", "description": "a white person smiling while holding a beer",
         "topic": "beer", "ar": "I should drink this beer because it is as light as a feather"},
        {"base_id": "car_0", "image": "car_0.png", "description": "a white person driving a red car along the coast",
         "topic": "cars", "ar": "I should buy this car because it is as fast as lightning"},
        {"base_id": "soda_0", "image": "soda_0.png", "description": "a white person at a beach party with a soda",
         "topic": "soda", "ar": "I should drink this soda because it is as cool as ice"},
    ]
    with open(AUD / "bases.jsonl", "w") as fh:
        for b in bases:
            fh.write(json.dumps(b) + "\n")
    gender_bases = [
        {"base_id": "shoes_0", "image": "shoes_0.png", "description": "a man running in new shoes",
         "topic": "clothing", "source_value": "man"},
        {"base_id": "beauty_0", "image": "beauty_0.png", "description": "a woman applying face cream",
         "topic": "beauty", "source_value": "woman"},
    ]
    with open(AUD / "gender_bases.jsonl", "w") as fh:
        for b in gender_bases:
            fh.write(json.dumps(b) + "\n")

    faces = [
        ("gen_00", "beer", "Man", "white"), ("gen_00", "beer", "Woman", "white"),
        ("gen_01", "beer", "Man", "latino hispanic"), ("gen_02", "cars", "Man", "white"),
        ("gen_03", "cars", "Man", "asian"), ("gen_04", "beauty", "Woman", "white"),
        ("gen_05", "beauty", "Woman", "black"), ("gen_06", "soda", "Man", "middle eastern"),
        ("gen_07", "soda", "Woman", "indian"), ("gen_08", "clothing", "Woman", "white"),
    ]
    with open(AUD / "profiles.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "topic", "face_index", "gender", "race"])
        seen = {}
        for image_id, topic, gender, race in faces:
            idx = seen.get(image_id, 0)
            seen[image_id] = idx + 1
            w.writerow([image_id, topic, idx, gender, race])
    print(f"{len(rows)} annotation fixtures, {len(bases) + len(gender_bases)} swap bases, {len(faces)} faces")


if __name__ == "__main__":
    main()
