#!/usr/bin/env python3
"""Regenerates the small corpora under tests/fixtures/smoke.

Arguments carry cue words from resources/mock_cues.txt so the reference
classifier has something to learn. Target domains use their own filler
vocabulary and weaker cues, which gives adaptation a gap to close.
"""
import json
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parents[2]
OUT = pathlib.Path(__file__).resolve().parent / "smoke"

TRAINING = [
    "conjunction", "level-of-detail", "instantiation", "manner", "substitution",
    "equivalence", "cause", "purpose", "cause+belief", "condition", "concession",
    "contrast", "asynchronous", "synchronous",
]

FILLER = {
    "PDTB": "shares market company quarter trading investors price bank profit board".split(),
    "EP": "parliament council member state vote committee union resolution debate policy".split(),
    "WK": "river village century album species station population county river season".split(),
    "NV": "door night letter garden window voice morning road silence fire".split(),
}
DOMAINS = ["EP", "WK", "NV"]


def cues():
    table = {}
    for line in (ROOT / "resources" / "mock_cues.txt").read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        label, words = line.split(":", 1)
        table[label.strip()] = words.split()
    return table


def sentence(rng, filler, cue_words=(), length=(5, 9)):
    words = [rng.choice(filler) for _ in range(rng.randint(*length))]
    for cue in cue_words:
        words.insert(rng.randrange(len(words) + 1), cue)
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def write_jsonl(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=False) + "\n")


def main():
    rng = random.Random(20240601)
    cue = cues()
    OUT.mkdir(parents=True, exist_ok=True)

    source = []
    for section in range(0, 21):
        per_section = 18 if section >= 2 else 14
        for i in range(per_section):
            label = TRAINING[(section * 7 + i) % len(TRAINING)]
            source.append({
                "doc_id": f"wsj_{section:02d}{i:02d}",
                "section": section,
                "arg1": sentence(rng, FILLER["PDTB"]),
                "arg2": sentence(rng, FILLER["PDTB"], [rng.choice(cue[label]), rng.choice(cue[label])]),
                "label": label,
            })
    # a label outside the training set, dropped at ingest
    source.append({"doc_id": "wsj_0399", "section": 3, "arg1": "Prices fell.", "arg2": "Or they rose.",
                   "label": "disjunction"})
    write_jsonl(OUT / "source.jsonl", source)

    target = []
    for d in DOMAINS:
        for i in range(42):
            label = TRAINING[i % len(TRAINING)]
            second = TRAINING[(i * 5 + 3) % len(TRAINING)]
            # one cue word, sometimes none, plus domain filler
            words = [rng.choice(cue[label])] if rng.random() < 0.8 else []
            major = rng.choice([6, 7, 8])
            votes = {label: major}
            if second != label:
                votes[second] = 10 - major
            else:
                votes[label] = 10
            target.append({
                "doc_id": f"{d.lower()}_test_{i:03d}",
                "domain": d,
                "arg1": sentence(rng, FILLER[d]),
                "arg2": sentence(rng, FILLER[d], words),
                "votes": votes,
            })
        # all annotators said no-relation: excluded at ingest
        target.append({"doc_id": f"{d.lower()}_test_nr", "domain": d, "arg1": sentence(rng, FILLER[d]),
                       "arg2": sentence(rng, FILLER[d]), "votes": {"no-relation": 10}})
    write_jsonl(OUT / "target.jsonl", target)

    raw = []
    for d in DOMAINS:
        for doc in range(2):
            for s in range(30):
                label = rng.choice(TRAINING)
                words = [rng.choice(cue[label])] if rng.random() < 0.5 else []
                raw.append({"doc_id": f"{d.lower()}_raw_{doc}", "domain": d,
                            "sentence": sentence(rng, FILLER[d], words)})
    write_jsonl(OUT / "raw.jsonl", raw)

    examples = []
    for d in DOMAINS:
        for label in TRAINING + ["similarity"]:
            examples.append({
                "id": f"{d.lower()}-{label}",
                "domain": d,
                "label": label,
                "arg1": sentence(rng, FILLER[d]),
                "arg2": sentence(rng, FILLER[d], [cue[label][0]]),
            })
    write_jsonl(OUT / "examples.jsonl", examples)


if __name__ == "__main__":
    main()
