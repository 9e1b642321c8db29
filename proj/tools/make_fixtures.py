#!/usr/bin/env python3
"""Regenerates the test fixtures under tests/fixtures.

overfit_corpus.jsonl  20 short grounded dialogues (10 cities, 10 animals)
overfit_lexicon.tsv   small commonsense lexicon for the same vocabulary
mohicans/              the Mohicans fragment and its coreference annotation
"""

import json
import pathlib
import re

ROOT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"

CITIES = [
    ("Lyon", "France", "Rhone River"),
    ("Cologne", "Germany", "Rhine River"),
    ("Budapest", "Hungary", "Danube River"),
    ("Cairo", "Egypt", "Nile River"),
    ("Seville", "Spain", "Guadalquivir River"),
    ("Florence", "Italy", "Arno River"),
    ("Warsaw", "Poland", "Vistula River"),
    ("Kyiv", "Ukraine", "Dnieper River"),
    ("Lisbon", "Portugal", "Tagus River"),
    ("Calcutta", "India", "Hooghly River"),
]

ANIMALS = [
    ("lion", "savanna", "meat"),
    ("panda", "forest", "bamboo"),
    ("camel", "desert", "thorns"),
    ("penguin", "ice", "fish"),
    ("koala", "woodland", "leaves"),
    ("beaver", "river", "bark"),
    ("otter", "coast", "clams"),
    ("zebra", "grassland", "grass"),
    ("walrus", "arctic", "mussels"),
    ("lemur", "jungle", "fruit"),
]

LEXICON = [
    ("city", "RelatedTo", "river"),
    ("city", "HasA", "people"),
    ("river", "AtLocation", "city"),
    ("river", "RelatedTo", "water"),
    ("lion", "AtLocation", "savanna"),
    ("lion", "Desires", "meat"),
    ("panda", "AtLocation", "forest"),
    ("panda", "Desires", "bamboo"),
    ("camel", "AtLocation", "desert"),
    ("penguin", "AtLocation", "ice"),
    ("penguin", "Desires", "fish"),
    ("koala", "AtLocation", "woodland"),
    ("beaver", "AtLocation", "river"),
    ("otter", "AtLocation", "coast"),
    ("zebra", "AtLocation", "grassland"),
    ("zebra", "Desires", "grass"),
    ("walrus", "AtLocation", "arctic"),
    ("lemur", "AtLocation", "jungle"),
    ("lemur", "Desires", "fruit"),
    ("grass", "RelatedTo", "green"),
    ("ice cream", "IsA", "food"),
]


def city_dialogue(i, city, country, river):
    doc = [f"{city} is a city in {country} .", f"{city} lies on the {river} ."]
    return {
        "dialogue_id": f"city{i:02d}",
        "topic": city,
        "turns": [
            {"speaker": "agent1", "text": f"Have you ever been to {city} ?", "knowledge": doc},
            {"speaker": "agent2", "text": f"yes , {city} is a lovely city in {country} .", "knowledge": doc},
            {"speaker": "agent1", "text": "What river runs through it ?", "knowledge": []},
            {"speaker": "agent2", "text": f"the {river} runs through {city} .", "knowledge": []},
        ],
    }


def animal_dialogue(i, animal, habitat, food):
    doc = [f"the {animal} lives in the {habitat} .", f"the {animal} mostly eats {food} ."]
    return {
        "dialogue_id": f"animal{i:02d}",
        "topic": animal,
        "turns": [
            {"speaker": "agent1", "text": f"I just read about the {animal} .", "knowledge": doc},
            {"speaker": "agent2", "text": f"the {animal} lives in the {habitat} .", "knowledge": doc},
            {"speaker": "agent1", "text": "What does it eat ?", "knowledge": []},
            {"speaker": "agent2", "text": f"the {animal} mostly eats {food} .", "knowledge": []},
        ],
    }


MOHICANS_TURNS = [
    ("agent1", "Have you seen The Last of the Mohicans ?"),
    ("agent2", "Yes , it is a 1992 historical epic directed by Micheal Mann ."),
    ("agent1", "I love The Last of the Mohicans . Who produced that movie ?"),
    ("agent2", "It was produced by Morgan Creek Pictures ."),
    ("agent1", "Did Micheal Mann also write it ?"),
    ("agent2", "He wrote the screenplay with Christopher Crowe ."),
    ("agent1", "Was it a success ?"),
    ("agent2", "It earned over seventy million dollars in the United States ."),
]


def span(turn_text, needle):
    m = re.search(r"\b" + re.escape(needle) + r"\b", turn_text)
    return [m.start(), m.end()]


def mohicans():
    dialogue = {
        "dialogue_id": "mohicans",
        "topic": "The Last of the Mohicans",
        "turns": [{"speaker": s, "text": t, "knowledge": []} for s, t in MOHICANS_TURNS],
    }
    texts = [t for _, t in MOHICANS_TURNS]
    title = "The Last of the Mohicans"
    film_mentions = [
        [0, *span(texts[0], title)],
        [1, *span(texts[1], "it")],
        [2, *span(texts[2], title)],
        [2, *span(texts[2], "that movie")],
        [3, *span(texts[3], "It")],
        [4, *span(texts[4], "it")],
        [6, *span(texts[6], "it")],
        [7, *span(texts[7], "It")],
    ]
    director_mentions = [
        [1, *span(texts[1], "Micheal Mann")],
        [4, *span(texts[4], "Micheal Mann")],
        [5, *span(texts[5], "He")],
    ]
    clusters = [
        {"representative": title, "mentions": film_mentions},
        {"representative": "", "mentions": director_mentions},
    ]
    rewritten = rewrite(texts, clusters)
    names = ["The Last of the Mohicans", "Micheal Mann", "Morgan Creek Pictures", "Christopher Crowe",
             "United States"]
    entities = []
    for turn, text in enumerate(rewritten):
        for name in names:
            start = text.find(name)
            while start >= 0:
                entities.append([turn, start, start + len(name), name])
                start = text.find(name, start + 1)
    annotation = {"dialogue_id": "mohicans", "clusters": clusters, "entities": entities}
    return dialogue, annotation


def rewrite(texts, clusters):
    """Right-to-left substitution of every non-representative mention."""
    edits = {}
    for c in clusters:
        rep = c["representative"]
        if not rep:
            surfaces = [texts[t][b:e] for t, b, e in c["mentions"]]
            rep = max(surfaces, key=len)
        for t, b, e in c["mentions"]:
            if texts[t][b:e] != rep:
                edits.setdefault(t, []).append((b, e, rep))
    out = list(texts)
    for t, items in edits.items():
        for b, e, rep in sorted(items, reverse=True):
            out[t] = out[t][:b] + rep + out[t][e:]
    return out


def main():
    ROOT.mkdir(parents=True, exist_ok=True)
    dialogues = [city_dialogue(i, *c) for i, c in enumerate(CITIES)]
    dialogues += [animal_dialogue(i, *a) for i, a in enumerate(ANIMALS)]
    with open(ROOT / "overfit_corpus.jsonl", "w") as f:
        for d in dialogues:
            f.write(json.dumps(d) + "\n")
    with open(ROOT / "overfit_lexicon.tsv", "w") as f:
        for h, r, t in LEXICON:
            f.write(f"{h}\t{r}\t{t}\n")

    fig_dir = ROOT / "mohicans"
    (fig_dir / "annotations").mkdir(parents=True, exist_ok=True)
    dialogue, annotation = mohicans()
    with open(fig_dir / "dialogue.jsonl", "w") as f:
        f.write(json.dumps(dialogue) + "\n")
    with open(fig_dir / "annotations" / "mohicans.json", "w") as f:
        json.dump(annotation, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
