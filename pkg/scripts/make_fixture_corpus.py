"""Regenerate the synthetic fixture corpus under fixtures/corpus and the statement set.

Images are tiny procedurally drawn "ads" whose palette and layout depend on the
country, so retrieval and training have signal to work with. Nothing here is
real advertising data.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "fixtures" / "corpus"
RES = ROOT / "src" / "culgen" / "resources"
SIZE = 24

PALETTES = {
    "China": [(200, 30, 30), (240, 200, 40), (120, 10, 10)],
    "France": [(0, 50, 150), (245, 245, 245), (220, 30, 45)],
    "South Africa": [(0, 120, 70), (250, 190, 0), (20, 20, 20)],
    "United Arab Emirates": [(220, 190, 130), (0, 130, 60), (250, 250, 250)],
    "Mexico": [(0, 104, 71), (206, 17, 38), (190, 100, 60)],
    "Japan": [(250, 250, 250), (190, 0, 40), (60, 60, 60)],
}

COMPONENTS = {
    "China": [["red lanterns", "Chinese characters"], ["dragon motif", "red lanterns"],
              ["Great Wall", "gold coins"], ["Chinese characters", "lotus flower"]],
    "France": [["French text", "baguette"], ["Eiffel Tower", "cafe terrace"],
               ["tricolour flag", "French text"], ["lavender fields", "croissant"]],
    "South Africa": [["Table Mountain", "braai grill"], ["springbok", "beaded jewellery"],
                     ["protea flower", "English and Zulu text"], ["savanna", "springbok"]],
    "United Arab Emirates": [["Arabic calligraphy", "desert dunes"], ["crescent moon", "palm trees"],
                             ["city towers", "Arabic calligraphy"], ["dhow boat", "palm trees"]],
    "Mexico": [["papel picado", "Spanish text"], ["sombrero", "cactus"], ["sugar skull", "marigolds"],
               ["Spanish text", "talavera tiles"], ["pyramid of the sun", "cactus"]],
    "Japan": [["kanji signage", "cherry blossoms"], ["torii gate", "kanji signage"]],
}

TOPICS = ["beer", "clothing", "cars", "soda", "beauty"]

TRAIN_ARS = [
    ("drink this beer", "it is as light as a feather"),
    ("use this deodorant", "it is as fresh as mint"),
    ("buy this car", "it is as fast as lightning"),
    ("wear these shoes", "they are as soft as clouds"),
    ("drink this soda", "it is as cool as ice"),
    ("use this shampoo", "it is as gentle as silk"),
    ("eat this chocolate", "it is as smooth as velvet"),
    ("fly with this airline", "it is as comfortable as home"),
]

PRODUCTS = [
    ("drink this beer", [("light", "a feather"), ("crisp", "autumn air"), ("golden", "the sunset"), ("cold", "a mountain stream")]),
    ("use this deodorant", [("fresh", "mint"), ("long-lasting", "a summer day"), ("light", "a breeze"), ("clean", "spring rain")]),
    ("buy this car", [("fast", "lightning"), ("safe", "a fortress"), ("quiet", "a library"), ("smooth", "glass")]),
    ("wear these shoes", [("soft", "clouds"), ("light", "air"), ("sturdy", "an oak"), ("stylish", "a runway")]),
    ("drink this soda", [("cool", "ice"), ("sweet", "candy"), ("fizzy", "fireworks"), ("refreshing", "a sea breeze")]),
    ("use this shampoo", [("gentle", "silk"), ("fragrant", "a rose garden"), ("rich", "cream"), ("pure", "spring water")]),
    ("eat this chocolate", [("smooth", "velvet"), ("rich", "a king"), ("dark", "midnight"), ("sweet", "honey")]),
    ("fly with this airline", [("comfortable", "home"), ("punctual", "a clock"), ("friendly", "a neighbour"), ("calm", "a lake")]),
    ("drink this coffee", [("strong", "a bull"), ("warm", "a hug"), ("bold", "a lion"), ("aromatic", "a spice market")]),
    ("wear this watch", [("precise", "a heartbeat"), ("elegant", "a swan"), ("durable", "stone"), ("bright", "a star")]),
    ("use this phone", [("fast", "a cheetah"), ("sharp", "an eagle's eye"), ("thin", "a leaf"), ("clever", "a fox")]),
    ("drink this tea", [("calming", "a quiet garden"), ("fragrant", "jasmine"), ("warm", "sunshine"), ("pure", "morning dew")]),
    ("use this sunscreen", [("protective", "an umbrella"), ("light", "water"), ("gentle", "a feather"), ("lasting", "the summer")]),
    ("eat this cereal", [("crunchy", "autumn leaves"), ("wholesome", "a farm breakfast"), ("sweet", "berries"), ("golden", "wheat fields")]),
    ("buy this perfume", [("enchanting", "a moonlit night"), ("fresh", "citrus"), ("soft", "a petal"), ("memorable", "a first dance")]),
    ("use this toothpaste", [("bright", "snow"), ("fresh", "a winter morning"), ("strong", "steel"), ("clean", "a whistle")]),
    ("ride this bicycle", [("light", "a bird"), ("free", "the wind"), ("steady", "a rock"), ("fast", "an arrow")]),
    ("drink this juice", [("fresh", "an orchard"), ("sweet", "summer"), ("bright", "sunrise"), ("natural", "a meadow")]),
    ("use this laundry detergent", [("clean", "fresh snow"), ("gentle", "a lullaby"), ("powerful", "a wave"), ("fragrant", "a meadow")]),
    ("wear this jacket", [("warm", "a fireplace"), ("tough", "leather armour"), ("light", "a feather"), ("stylish", "a magazine cover")]),
    ("eat at this restaurant", [("welcoming", "a family kitchen"), ("delicious", "a festival"), ("lively", "a carnival"), ("cosy", "a blanket")]),
    ("stay at this hotel", [("restful", "a cloud"), ("grand", "a palace"), ("peaceful", "a lagoon"), ("friendly", "home")]),
    ("use this moisturiser", [("soft", "silk"), ("hydrating", "rain"), ("gentle", "a breeze"), ("smooth", "satin")]),
    ("drink this water", [("pure", "a glacier"), ("clear", "crystal"), ("fresh", "a spring"), ("light", "mist")]),
    ("play this video game", [("exciting", "a rollercoaster"), ("immersive", "a dream"), ("fast", "a race car"), ("epic", "a legend")]),
]


def draw(country: str, pattern: int, seed: int) -> Image.Image:
    rng = np.random.default_rng(seed)
    a, b, c = (np.array(p, dtype=np.float64) for p in PALETTES[country])
    yy, xx = np.mgrid[0:SIZE, 0:SIZE] / (SIZE - 1)
    if pattern == 0:
        mask = (np.floor(yy * 3) % 2)[..., None]
        img = a * (1 - mask) + b * mask
    elif pattern == 1:
        third = np.floor(xx * 3)[..., None]
        img = np.where(third == 0, a, np.where(third == 1, b, c))
    elif pattern == 2:
        disc = (((yy - 0.5) ** 2 + (xx - 0.5) ** 2) < 0.09)[..., None]
        img = np.where(disc, b, a)
    elif pattern == 3:
        t = ((yy + xx) / 2)[..., None]
        img = a * (1 - t) + c * t
    else:
        mask = ((np.floor(yy * 4) + np.floor(xx * 4)) % 2)[..., None]
        img = a * (1 - mask) + c * mask
    img = img + rng.normal(0.0, 8.0, img.shape)
    return Image.fromarray(np.clip(img, 0, 255).astype(np.uint8))


def statements() -> list:
    out = []
    for action, pairs in PRODUCTS:
        for adj, noun in pairs:
            verb = "they are" if action.startswith("wear these") else "it is"
            out.append({"action": action, "reason": f"{verb} as {adj} as {noun}"})
    return out


def main():
    img_dir = CORPUS / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    db_rows = []
    seed = 0
    for country, comps in COMPONENTS.items():
        slug = country.lower().replace(" ", "_")
        for j, components in enumerate(comps):
            name = f"{slug}_{j}"
            draw(country, j % 5, seed).save(img_dir / f"{name}.png")
            seed += 1
            db_rows.append({"id": name, "image": f"images/{name}.png", "country": country,
                            "components": components, "topic": TOPICS[j % len(TOPICS)]})
    with open(CORPUS / "db_manifest.jsonl", "w") as fh:
        for row in db_rows:
            fh.write(json.dumps(row) + "\n")

    # 8-example training set: two per country for four of the evaluation countries.
    train_rows = []
    countries = ["China", "France", "United Arab Emirates", "Mexico"]
    for i, (action, reason) in enumerate(TRAIN_ARS):
        country = countries[i % 4]
        name = f"train_{i}"
        draw(country, (i // 4) + 1, 1000 + i).save(img_dir / f"{name}.png")
        train_rows.append({"image": f"images/{name}.png", "country": country, "action": action, "reason": reason})
    with open(CORPUS / "train_manifest.jsonl", "w") as fh:
        for row in train_rows:
            fh.write(json.dumps(row) + "\n")

    stmts = statements()
    assert len(stmts) == 100 and len({(s["action"], s["reason"]) for s in stmts}) == 100
    with open(RES / "statements.jsonl", "w") as fh:
        for s in stmts:
            fh.write(json.dumps(s) + "\n")
    print(f"{len(db_rows)} db records, {len(train_rows)} training rows, {len(stmts)} statements")


if __name__ == "__main__":
    main()
