#!/usr/bin/env python3
"""Generate the bundled 200-record mini-corpus and its tally manifest.

Every abstract is built from the trigger words the offline mock generator
recognizes, so the expected classification of each record follows from how it
was generated. The manifest records those expectations, tallied here from the
generation plan rather than from the Rust implementation.

Usage: make_mini_corpus.py OUT_DIR
"""

import json
import random
import sys
from pathlib import Path

SEED = 20240607
LAST_TRAIN_YEAR = 2022

SCIENCE_VENUES = ["Nature", "Science", "PNAS", "Physical Review Letters", "Nature Communications"]
AI_VENUES = ["NeurIPS", "ICML", "ICLR", "ACL", "KDD"]

# trigger -> phrase used in abstracts; order matches the mock's matching order.
SCIENCE_PROBLEMS = {
    "protein": "protein folding",
    "climate": "regional climate projections",
    "galaxy": "galaxy survey images",
    "molecul": "molecular property estimation",
    "tumor": "tumor segmentation in scans",
    "earthquake": "earthquake aftershock sequences",
}
COMPUTING_PROBLEMS = {
    "recommend": "recommender feeds",
    "translation": "translation between languages",
}
AI_METHODS = {
    "transformer": "a transformer encoder",
    "graph neural": "graph neural message passing",
    "convolutional": "a convolutional network",
    "random forest": "a random forest ensemble",
    "reinforcement": "reinforcement learning agents",
}
NON_AI_METHOD = ("finite element", "a finite element solver")

# Each science problem favours two methods, giving the graph block structure.
PREFERRED = {
    "protein": ["transformer", "graph neural"],
    "molecul": ["graph neural", "random forest"],
    "climate": ["convolutional", "reinforcement"],
    "earthquake": ["random forest", "convolutional"],
    "galaxy": ["convolutional", "transformer"],
    "tumor": ["convolutional", "random forest"],
}

ADJECTIVES = ["Scalable", "Robust", "Efficient", "Interpretable", "Accurate", "Adaptive", "Fast", "Principled"]
NOUNS = ["study", "benchmark", "analysis", "framework", "approach", "pipeline", "evaluation", "investigation"]
FILLERS = [
    "Results improve on strong baselines.",
    "We release code and data.",
    "Experiments span several public datasets.",
    "Ablations isolate the main design choices.",
    "The approach scales to large inputs.",
    "We discuss limitations and future work.",
]

# 110 AI4Science, 40 science-only, 45 AI-only, 5 sentinel records.
PLAN = {"ai4science": 110, "science_only": 40, "ai_only": 45}
SENTINELS = [
    ("__GARBLE__", "protein", "transformer"),
    ("__GARBLE__", "climate", "convolutional"),
    ("__NOSCI__", "galaxy", "convolutional"),
    ("__NOPROBLEM__", "tumor", "random forest"),
    ("__NOAI__", "earthquake", "reinforcement"),
]


def abstract(rng, problem_phrase, method_phrase, sentinel=None):
    parts = [f"We address {problem_phrase}."]
    if method_phrase:
        parts.append(f"Our model uses {method_phrase}.")
    parts.append(rng.choice(FILLERS))
    if sentinel:
        parts.append(sentinel)
    return " ".join(parts)


def title(rng, trigger_word):
    return f"{rng.choice(ADJECTIVES)} {trigger_word} {rng.choice(NOUNS)} {rng.randint(1, 999)}"


def main(out_dir):
    rng = random.Random(SEED)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    expected = []  # (kind, community, year, problem trigger or None, method trigger or None)

    def add(kind, venue_pool, problem, method, sentinel=None, problem_phrase=None, method_phrase=None):
        year = rng.randint(2017, 2024)
        venue = rng.choice(venue_pool)
        rid = f"mini-{len(records) + 1:03d}"
        text = abstract(rng, problem_phrase, method_phrase, sentinel)
        records.append({"id": rid, "title": title(rng, NOUNS[len(records) % len(NOUNS)]), "abstract": text,
                        "venue": venue, "year": year})
        community = "science" if venue in SCIENCE_VENUES else "ai"
        expected.append((kind, community, year, problem, method))

    sci = list(SCIENCE_PROBLEMS)
    for _ in range(PLAN["ai4science"]):
        p = rng.choice(sci)
        m = rng.choice(PREFERRED[p]) if rng.random() < 0.8 else rng.choice(list(AI_METHODS))
        pool = SCIENCE_VENUES if rng.random() < 0.5 else AI_VENUES
        add("ai4science", pool, p, m, problem_phrase=SCIENCE_PROBLEMS[p], method_phrase=AI_METHODS[m])
    for i in range(PLAN["science_only"]):
        p = rng.choice(sci)
        if i % 2 == 0:
            add("science_only", SCIENCE_VENUES, p, NON_AI_METHOD[0], problem_phrase=SCIENCE_PROBLEMS[p],
                method_phrase=NON_AI_METHOD[1])
        else:
            add("science_only", SCIENCE_VENUES, p, None, problem_phrase=SCIENCE_PROBLEMS[p])
    for _ in range(PLAN["ai_only"]):
        p = rng.choice(list(COMPUTING_PROBLEMS))
        m = rng.choice(list(AI_METHODS))
        add("ai_only", AI_VENUES, p, m, problem_phrase=COMPUTING_PROBLEMS[p], method_phrase=AI_METHODS[m])
    for sentinel, p, m in SENTINELS:
        add("sentinel", SCIENCE_VENUES, p, m, sentinel=sentinel, problem_phrase=SCIENCE_PROBLEMS[p],
            method_phrase=AI_METHODS[m])

    order = list(range(len(records)))
    rng.shuffle(order)
    records = [records[i] for i in order]
    expected = [expected[i] for i in order]
    for i, r in enumerate(records):
        r["id"] = f"mini-{i + 1:03d}"

    invalid = [
        {"id": "bad-001", "title": "Empty abstract", "abstract": "  ", "venue": "Nature", "year": 2020},
        {"id": "bad-002", "title": "Unknown venue", "abstract": "We address protein folding.", "venue": "Blog",
         "year": 2021},
        {"id": "bad-003", "title": "Out of range", "abstract": "We address protein folding.", "venue": "Nature",
         "year": 1850},
    ]
    lines = [json.dumps(r, ensure_ascii=False) for r in records[:100]]
    lines += [json.dumps(r) for r in invalid]
    lines += [json.dumps(r, ensure_ascii=False) for r in records[100:]]
    (out / "corpus.jsonl").write_text("\n".join(lines) + "\n")

    venue_lines = ["# venue\tcommunity"]
    venue_lines += [f"{v}\tscience" for v in SCIENCE_VENUES] + [f"{v}\tai" for v in AI_VENUES]
    (out / "venues.tsv").write_text("\n".join(venue_lines) + "\n")

    def count(pred):
        return sum(1 for e in expected if pred(e))

    ai4s = [e for e in expected if e[0] == "ai4science"]
    manifest = {
        "seed": SEED,
        "records": len(records),
        "rejected": len(invalid),
        "communities": {"science": count(lambda e: e[1] == "science"), "ai": count(lambda e: e[1] == "ai")},
        "last_train_year": LAST_TRAIN_YEAR,
        "train": count(lambda e: e[2] <= LAST_TRAIN_YEAR),
        "test": count(lambda e: e[2] > LAST_TRAIN_YEAR),
        "ai4science": len(ai4s),
        "ai4science_train": sum(1 for e in ai4s if e[2] <= LAST_TRAIN_YEAR),
        "ai4science_test": sum(1 for e in ai4s if e[2] > LAST_TRAIN_YEAR),
        "ai4science_per_community": {
            "science": sum(1 for e in ai4s if e[1] == "science"),
            "ai": sum(1 for e in ai4s if e[1] == "ai"),
        },
        "parse_errors": sum(1 for s in SENTINELS if s[0] == "__GARBLE__"),
        "distinct_problems": len({e[3] for e in expected if e[3]}),
        "distinct_methods": len({e[4] for e in expected if e[4]}),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/cli/tests/fixtures/mini")
