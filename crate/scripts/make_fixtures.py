#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the catalog, experiment and aggregation fixtures.

The aggregation golden report is computed here with the standard library
(statistics.mean / statistics.stdev, decimal half-even rounding) so that it
serves as an independent oracle for the Rust report renderer.
"""

import csv
import io
import json
import random
import statistics
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"

CITIES = {
    "Jaipur": ["City Palace", "Hawa Mahal", "Jaipur Junction station"],
    "Lisbon": ["Belem Tower", "Rossio Square", "Santa Apolonia station"],
    "Florence": ["Ponte Vecchio", "the Uffizi Gallery", "Santa Maria Novella station"],
    "Kyoto": ["Nishiki Market", "Kiyomizu-dera", "Kyoto Station"],
    "Seville": ["the Cathedral", "Plaza de Espana", "Santa Justa station"],
    "Vienna": ["St. Stephen's Cathedral", "the Hofburg", "Westbahnhof"],
    "Edinburgh": ["the Royal Mile", "Edinburgh Castle", "Waverley station"],
    "Porto": ["Ribeira", "Livraria Lello", "Sao Bento station"],
}

NAMES = [
    "Hotel Serene Oasis", "Palazzo Aurora", "Casa do Rio", "The Linden House", "Hotel Mirador",
    "Ryokan Hanami", "Villa Bellavista", "The Granary Rooms", "Hotel Alameda", "Maison Clair",
    "The Harbour Inn", "Hotel Azulejo", "Residenza Leoni", "Garden Court Hotel", "Hotel Nizam Bagh",
    "The Old Mill Lodge", "Hotel Giralda View", "Pension Adler", "The Thistle Suites", "Casa Ribeira",
    "Hotel Sakura Kan", "Palacio Verde", "The Cobbler's Yard", "Hotel Imperial Ring", "Dar al Nour",
    "The Lantern Hotel", "Hotel Porta Rossa", "Quinta das Flores", "Hotel Amber Fort", "The Quay Hotel",
]

AMENITIES = ["Free Wi-Fi", "On-site parking", "24-hour front desk", "Concierge service", "Luggage storage",
             "Laundry service", "Elevator", "Express check-in"]
RECREATION = ["Rooftop pool and spa", "Fitness center", "Sauna", "Garden terrace", "Bicycle rental",
              "Tennis court", "Yoga classes", "Hammam"]
DINING = ["Rooftop restaurant", "Breakfast buffet", "Lobby bar", "Room service", "Vegetarian menu",
          "Wine cellar", "Tea lounge"]
ROOMS = ["Family suites", "Air conditioning", "Minibar", "Balcony with city view", "Soundproof windows",
         "Rain showers", "Kitchenette"]
EXTRAS = ["Pet friendly", "Babysitting on request", "Currency exchange", "Tour desk", "Airport shuttle",
          "Bike storage"]
WELLNESS = ["Massage treatments", "Steam room", "Jacuzzi", "Indoor pool"]


def noisy(item, rng):
    """Adds the formatting defects the cleaner has to undo."""
    roll = rng.random()
    if roll < 0.15:
        return f"<b>{item}</b>"
    if roll < 0.25:
        return item.replace(" ", "&nbsp;", 1)
    if roll < 0.32:
        return f"<span class=\"hl\">{item}</span>"
    if roll < 0.40:
        return f"  {item}  "
    return item


def poi(landmarks, rng):
    """(raw, cleaned) distance or walking-time phrase."""
    target = rng.choice(landmarks)
    kind = rng.randrange(6)
    if kind == 0:
        km = rng.choice([1, 2, 3, 4])
        return f"{km},0 KM from {target}", f"{km} km from {target}"
    if kind == 1:
        whole, frac = rng.choice([(1, 5), (2, 5), (3, 2)])
        return f"{whole},{frac} km from {target}", f"{whole}.{frac} km from {target}"
    if kind == 2:
        mins = rng.choice([5, 10, 15])
        return f"{mins} min walk from {target}", f"{mins}-minute walk from {target}"
    if kind == 3:
        mins = rng.choice([10, 20])
        return f"{mins}-minute walk to {target}", f"{mins}-minute walk to {target}"
    if kind == 4:
        m = rng.choice([300, 500, 750])
        return f"{m}m from {target}", f"{m} meters from {target}"
    m = rng.choice([200, 400])
    return f"{m} mtrs from {target}", f"{m} meters from {target}"


def pick(pool, rng, lo, hi):
    return rng.sample(pool, rng.randint(lo, hi))


def reference(name, city, parts):
    """A plain brochure-style description used as the training output."""
    s = [f"{name} welcomes guests to {city} with a calm, considered stay."]
    if parts.get("recreation"):
        s.append(f"Guests can unwind with {', '.join(p.lower() for p in parts['recreation'])}.")
    if parts.get("dining"):
        s.append(f"For meals there is {', '.join(p.lower() for p in parts['dining'])}.")
    if parts.get("rooms"):
        s.append(f"Rooms offer {', '.join(p.lower() for p in parts['rooms'])}.")
    if parts.get("amenities"):
        s.append(f"Practical touches include {', '.join(p.lower() for p in parts['amenities'])}.")
    if parts.get("pois"):
        s.append(f"The location is convenient: {'; '.join(parts['pois'])}.")
    return " ".join(s)


def primary_catalog(rng, names, id_prefix, with_reference=True, gaps=True):
    facilities = []
    plan = []
    for i, name in enumerate(names):
        city = list(CITIES)[i % len(CITIES)]
        landmarks = CITIES[city]
        parts = {
            "amenities": pick(AMENITIES, rng, 2, 4),
            "recreation": pick(RECREATION, rng, 1, 3),
            "dining": pick(DINING, rng, 1, 3),
            "rooms": [f"{rng.choice([12, 18, 24, 30, 42])} rooms"] + pick(ROOMS, rng, 1, 3),
        }
        fields = {k: ", ".join(noisy(v, rng) for v in vs) for k, vs in parts.items()}
        has_pois = not gaps or i % 3 != 0
        if has_pois:
            raw_cleaned = [poi(landmarks, rng) for _ in range(rng.randint(1, 2))]
            fields["pois"] = ", ".join(r for r, _ in raw_cleaned)
            parts["pois"] = [c for _, c in raw_cleaned]
        if with_reference:
            fields["description"] = reference(name, city, parts)
        fid = f"{id_prefix}{i + 1:03d}"
        facilities.append({"id": fid, "name": name, "city": city, "fields": fields})
        plan.append((fid, name, city, has_pois))
    return {"facilities": facilities}, plan


def variant(name, rng):
    roll = rng.randrange(3)
    if roll == 0:
        return name.upper()
    if roll == 1:
        return name.replace(" ", "-", 1)
    return name.lower()


def secondary_csv(rng, plan):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "name", "city", "pois", "wellness", "extras"])
    n = 0
    for fid, name, city, has_pois in plan:
        if n >= 14 or (has_pois and rng.random() < 0.5):
            continue
        n += 1
        landmarks = CITIES[city]
        pois = ", ".join(poi(landmarks, rng)[0] for _ in range(rng.randint(1, 2)))
        wellness = ", ".join(pick(WELLNESS, rng, 0, 2))
        extras = ", ".join(pick(EXTRAS, rng, 1, 2))
        w.writerow([f"s-{100 + n}", variant(name, rng), city, pois, wellness, extras])
    return out.getvalue()


def attr(s):
    return s.replace("&", "&amp;").replace('"', "&quot;").replace("'", "&#39;")


def tertiary_html(rng, plan):
    lines = ["<!-- tertiary provider export -->"]
    chosen = rng.sample(plan, 9)
    for n, (_, name, city, _) in enumerate(sorted(chosen)):
        lines.append(f'<facility id="t-{200 + n + 1}" name="{attr(name)}" city="{city}">')
        services = [noisy(x, rng) for x in pick(["Airport shuttle", "Laundry service", "Car rental desk",
                                                   "Multilingual staff", "Ticket service"], rng, 1, 2)]
        lines.append(f'  <field name="additional_services">{", ".join(services)}</field>')
        landmark = rng.choice(CITIES[city])
        note = f"Quiet street close to {landmark}. Tram stop at the door."
        lines.append(f'  <field name="location_notes"><p>{note}</p></field>')
        lines.append("</facility>")
    return "\n".join(lines) + "\n"


def descriptor(provider_id, priority, fmt, reference_field=None):
    d = {"provider_id": provider_id, "priority": priority, "format": fmt}
    if reference_field:
        d["reference_field"] = reference_field
    return d


def tenths(x):
    return Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_EVEN)


def aggregation_fixture(rng):
    """20 facilities x 5 repetitions x 2 models of raw counts."""
    runs = []
    for model, quality in (("mistral-7b-ft", 0.9), ("mixtral-8x7b", 0.98)):
        for f in range(1, 21):
            total = rng.randint(15, 24)
            for rep in range(1, 6):
                added = min(total, max(0, round(total * quality) + rng.randint(-3, 1)))
                halluc = rng.choice([0, 0, 0, 1, 1, 2]) if quality < 0.95 else rng.choice([0, 0, 0, 0, 1])
                words = rng.randint(180, 380) if quality < 0.95 else rng.randint(200, 300)
                runs.append({
                    "model_id": model,
                    "facility_id": f"agg-{f:02d}",
                    "repetition_index": rep,
                    "counts": {
                        "total_context_features": total,
                        "context_features_added": added,
                        "total_features_added": added + halluc,
                        "correct_features_added": added,
                        "hallucinated_features": halluc,
                    },
                    "length_words": words,
                })
    return runs


def oracle_report(runs):
    headers = ["Model", "Completeness", "Precision", "Length", "Hallucinations"]
    rows = []
    for model in sorted({r["model_id"] for r in runs}):
        per_facility = {}
        for r in runs:
            if r["model_id"] == model:
                per_facility.setdefault(r["facility_id"], []).append(r)
        cells = [model]
        for metric, unit in (("c", "%"), ("p", "%"), ("l", ""), ("h", "%")):
            means = []
            for fid in sorted(per_facility):
                vals = []
                for r in per_facility[fid]:
                    c = r["counts"]
                    if metric == "c":
                        vals.append(100 * c["context_features_added"] / c["total_context_features"])
                    elif metric == "p" and c["total_features_added"]:
                        vals.append(100 * c["correct_features_added"] / c["total_features_added"])
                    elif metric == "h" and c["total_features_added"]:
                        vals.append(100 * c["hallucinated_features"] / c["total_features_added"])
                    elif metric == "l":
                        vals.append(r["length_words"])
                means.append(statistics.mean(vals))
            m, s = statistics.mean(means), statistics.stdev(means)
            cells.append(f"({tenths(m)}{unit} – {tenths(s)}{unit})")
        rows.append(cells)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]

    def line(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip() + "\n"

    out = line(headers) + "-|-".join("-" * w for w in widths) + "\n"
    return out + "".join(line(r) for r in rows)


def main():
    rng = random.Random(20240611)
    (ROOT / "catalogs").mkdir(parents=True, exist_ok=True)
    (ROOT / "providers").mkdir(parents=True, exist_ok=True)
    (ROOT / "aggregation").mkdir(parents=True, exist_ok=True)
    (ROOT.parent / "tests" / "golden").mkdir(parents=True, exist_ok=True)

    primary, plan = primary_catalog(rng, NAMES, "p-")
    (ROOT / "catalogs" / "primary.json").write_text(json.dumps(primary, indent=2, ensure_ascii=False) + "\n")
    (ROOT / "catalogs" / "secondary.csv").write_text(secondary_csv(rng, plan))
    (ROOT / "catalogs" / "tertiary.html").write_text(tertiary_html(rng, plan))

    test20, _ = primary_catalog(random.Random(7), [f"Test Stay {i:02d}" for i in range(1, 21)], "x-", gaps=False)
    (ROOT / "catalogs" / "test20.json").write_text(json.dumps(test20, indent=2, ensure_ascii=False) + "\n")

    for name, d in (
        ("primary", descriptor("primary", 1, "structured-json", "description")),
        ("secondary", descriptor("secondary", 2, "delimited-table")),
        ("tertiary", descriptor("tertiary", 3, "html-fragments")),
    ):
        (ROOT / "providers" / f"{name}.json").write_text(json.dumps(d, indent=2) + "\n")

    experiment = {
        "models": [
            {"model_id": "mistral-7b-ft", "strategy": "fine-tune-instruction", "temperature": 0.7, "seed": 7},
            {"model_id": "mixtral-8x7b", "strategy": "system-prompt-chat", "temperature": 0.7, "seed": 7,
             "chat_template": "mixtral-system"},
        ],
        "repetitions": 5,
        "concurrency": 4,
    }
    (ROOT / "experiment.json").write_text(json.dumps(experiment, indent=2) + "\n")

    runs = aggregation_fixture(random.Random(99))
    (ROOT / "aggregation" / "runs.jsonl").write_text("".join(json.dumps(r) + "\n" for r in runs))
    (ROOT.parent / "tests" / "golden" / "aggregation_report.txt").write_text(oracle_report(runs))


if __name__ == "__main__":
    main()
