"""Regenerate resources/countries.json and resources/visual_elements.json."""

import json
from pathlib import Path

RES = Path(__file__).resolve().parents[1] / "src" / "culgen" / "resources"

# country: (region, aliases)
COUNTRIES = {
    "United States": ("Western", ["US", "USA", "U.S.", "U.S.A.", "United States of America", "America"]),
    "United Kingdom": ("Western", ["UK", "U.K.", "Britain", "Great Britain", "England", "Scotland", "Wales"]),
    "Canada": ("Western", []),
    "Australia": ("Western", []),
    "New Zealand": ("Western", []),
    "Ireland": ("Western", []),
    "France": ("Western", []),
    "Germany": ("Western", []),
    "Italy": ("Western", []),
    "Spain": ("Western", []),
    "Portugal": ("Western", []),
    "Netherlands": ("Western", ["Holland", "The Netherlands"]),
    "Belgium": ("Western", []),
    "Switzerland": ("Western", []),
    "Austria": ("Western", []),
    "Sweden": ("Western", []),
    "Norway": ("Western", []),
    "Denmark": ("Western", []),
    "Finland": ("Western", []),
    "Iceland": ("Western", []),
    "Luxembourg": ("Western", []),
    "Greece": ("Western", []),
    "Poland": ("Eastern-European", []),
    "Czech Republic": ("Eastern-European", ["Czechia"]),
    "Slovakia": ("Eastern-European", []),
    "Hungary": ("Eastern-European", []),
    "Romania": ("Eastern-European", []),
    "Bulgaria": ("Eastern-European", []),
    "Serbia": ("Eastern-European", []),
    "Croatia": ("Eastern-European", []),
    "Slovenia": ("Eastern-European", []),
    "Ukraine": ("Eastern-European", []),
    "Belarus": ("Eastern-European", []),
    "Russia": ("Eastern-European", ["Russian Federation"]),
    "Lithuania": ("Eastern-European", []),
    "Latvia": ("Eastern-European", []),
    "Estonia": ("Eastern-European", []),
    "China": ("East-Asian", ["PRC", "People's Republic of China", "Mainland China"]),
    "Japan": ("East-Asian", []),
    "South Korea": ("East-Asian", ["Korea", "Republic of Korea"]),
    "North Korea": ("East-Asian", []),
    "Taiwan": ("East-Asian", []),
    "Hong Kong": ("East-Asian", []),
    "Mongolia": ("East-Asian", []),
    "India": ("South-Asian", []),
    "Pakistan": ("South-Asian", []),
    "Bangladesh": ("South-Asian", []),
    "Sri Lanka": ("South-Asian", []),
    "Nepal": ("South-Asian", []),
    "Thailand": ("Southeast-Asian", []),
    "Vietnam": ("Southeast-Asian", ["Viet Nam"]),
    "Indonesia": ("Southeast-Asian", []),
    "Malaysia": ("Southeast-Asian", []),
    "Singapore": ("Southeast-Asian", []),
    "Philippines": ("Southeast-Asian", ["The Philippines"]),
    "Cambodia": ("Southeast-Asian", []),
    "Myanmar": ("Southeast-Asian", ["Burma"]),
    "United Arab Emirates": ("Middle-Eastern", ["UAE", "U.A.E.", "Emirates"]),
    "Saudi Arabia": ("Middle-Eastern", ["KSA"]),
    "Qatar": ("Middle-Eastern", []),
    "Kuwait": ("Middle-Eastern", []),
    "Bahrain": ("Middle-Eastern", []),
    "Oman": ("Middle-Eastern", []),
    "Yemen": ("Middle-Eastern", []),
    "Iran": ("Middle-Eastern", ["Persia", "Islamic Republic of Iran"]),
    "Iraq": ("Middle-Eastern", []),
    "Syria": ("Middle-Eastern", []),
    "Jordan": ("Middle-Eastern", []),
    "Lebanon": ("Middle-Eastern", []),
    "Israel": ("Middle-Eastern", []),
    "Palestine": ("Middle-Eastern", []),
    "Turkey": ("Middle-Eastern", ["Turkiye", "Türkiye"]),
    "Egypt": ("Middle-Eastern", []),
    "Afghanistan": ("Middle-Eastern", []),
    "Morocco": ("African", []),
    "Algeria": ("African", []),
    "Tunisia": ("African", []),
    "Libya": ("African", []),
    "Nigeria": ("African", []),
    "Ghana": ("African", []),
    "Kenya": ("African", []),
    "Ethiopia": ("African", []),
    "Tanzania": ("African", []),
    "Uganda": ("African", []),
    "Rwanda": ("African", []),
    "South Africa": ("African", ["RSA"]),
    "Zimbabwe": ("African", []),
    "Zambia": ("African", []),
    "Senegal": ("African", []),
    "Cameroon": ("African", []),
    "Ivory Coast": ("African", ["Cote d'Ivoire", "Côte d'Ivoire"]),
    "Angola": ("African", []),
    "Mozambique": ("African", []),
    "Botswana": ("African", []),
    "Namibia": ("African", []),
    "Mexico": ("Latin", []),
    "Brazil": ("Latin", ["Brasil"]),
    "Argentina": ("Latin", []),
    "Chile": ("Latin", []),
    "Colombia": ("Latin", []),
    "Peru": ("Latin", []),
    "Venezuela": ("Latin", []),
    "Ecuador": ("Latin", []),
    "Bolivia": ("Latin", []),
    "Uruguay": ("Latin", []),
    "Paraguay": ("Latin", []),
    "Cuba": ("Latin", []),
    "Dominican Republic": ("Latin", []),
    "Puerto Rico": ("Latin", []),
    "Guatemala": ("Latin", []),
    "Costa Rica": ("Latin", []),
    "Panama": ("Latin", []),
    "Jamaica": ("Latin", []),
    "Universal": ("Universal", ["Global", "International", "Worldwide", "None", "No specific country"]),
}

# Hand-written; regenerate with `culgen visual-elements --client ...` for the full vocabulary.
VISUAL_ELEMENTS = {
    "United States": "Statue of Liberty",
    "United Kingdom": "red double-decker bus",
    "Canada": "maple leaf",
    "Australia": "Sydney Opera House",
    "France": "Eiffel Tower",
    "Germany": "Brandenburg Gate",
    "Italy": "Colosseum",
    "Spain": "flamenco dancer",
    "Netherlands": "windmills and tulips",
    "Russia": "onion-domed cathedral",
    "China": "red lanterns and dragon",
    "Japan": "Mount Fuji with cherry blossoms",
    "South Korea": "hanok roofs",
    "India": "Taj Mahal",
    "Thailand": "golden temple spires",
    "Vietnam": "conical non la hat",
    "United Arab Emirates": "Burj Khalifa skyline with palms",
    "Saudi Arabia": "desert dunes and palm trees",
    "Turkey": "Hagia Sophia",
    "Egypt": "pyramids of Giza",
    "Morocco": "zellige mosaic tiles",
    "Nigeria": "ankara print fabric",
    "Kenya": "savanna with acacia trees",
    "South Africa": "Table Mountain",
    "Mexico": "papel picado and cacti",
    "Brazil": "Christ the Redeemer",
    "Argentina": "tango dancers",
    "Peru": "Machu Picchu",
}

if __name__ == "__main__":
    RES.mkdir(parents=True, exist_ok=True)
    data = {name: {"region": region, "aliases": aliases} for name, (region, aliases) in COUNTRIES.items()}
    (RES / "countries.json").write_text(json.dumps(data, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    (RES / "visual_elements.json").write_text(json.dumps(VISUAL_ELEMENTS, indent=1) + "\n", encoding="utf-8")
    print(len(data), "countries,", len(VISUAL_ELEMENTS), "visual elements")
