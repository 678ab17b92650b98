"""Deterministic synthetic corpus with a planted occupation-gender skew.

Desk-scale experiments need a corpus whose bias is known by construction:
each occupation word co-occurs with one gender's words at a fixed ratio
(default 4:1), half of the occupations skewed male and half female, so the
corpus as a whole stays balanced.  Sentences come from a tiny template
grammar that a small LSTM can learn in a few epochs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MALE_SKEW_OCCUPATIONS = ("engineer", "pilot", "surgeon", "mechanic", "captain")
FEMALE_SKEW_OCCUPATIONS = ("nurse", "teacher", "dancer", "florist", "singer")

DEFINING_PAIRS = (
    ("he", "she"),
    ("his", "her"),
    ("man", "woman"),
    ("father", "mother"),
    ("boy", "girl"),
    ("king", "queen"),
)

_NOUNS = ("bridge", "engine", "letter", "garden", "meal", "wagon")
_PLACES = ("station", "market", "school", "harbor")
_ANIMALS = ("horse", "sparrow", "rabbit", "fox")
_ADJECTIVES = ("old", "young", "quiet", "clever")
_MALE_NOUNS = ("man", "father", "boy", "king")
_FEMALE_NOUNS = ("woman", "mother", "girl", "queen")


def synthetic_sentences(n_sentences: int, seed, skew: float = 4.0) -> list[str]:
    """Sentences (no trailing markers) with the planted co-occurrence skew."""
    rng = np.random.default_rng(seed)
    occupations = list(MALE_SKEW_OCCUPATIONS) + list(FEMALE_SKEW_OCCUPATIONS)
    p_male = {occ: skew / (skew + 1.0) for occ in MALE_SKEW_OCCUPATIONS}
    p_male.update({occ: 1.0 / (skew + 1.0) for occ in FEMALE_SKEW_OCCUPATIONS})

    sentences = []
    for _ in range(n_sentences):
        t = rng.random()
        if t < 0.70:
            occ = occupations[rng.integers(len(occupations))]
            male = rng.random() < p_male[occ]
            form = rng.integers(3)
            if form == 0:
                pron = "he" if male else "she"
                s = (f"the {occ} said that {pron} had finished the "
                     f"{_NOUNS[rng.integers(len(_NOUNS))]}")
            elif form == 1:
                poss = "his" if male else "her"
                s = (f"the {occ} lost {poss} {_NOUNS[rng.integers(len(_NOUNS))]} "
                     f"near the {_PLACES[rng.integers(len(_PLACES))]}")
            else:
                gnoun = (_MALE_NOUNS if male else _FEMALE_NOUNS)[rng.integers(4)]
                s = (f"the {gnoun} thanked the {occ} at the "
                     f"{_PLACES[rng.integers(len(_PLACES))]}")
        elif t < 0.85:
            s = (f"the {_ANIMALS[rng.integers(len(_ANIMALS))]} slept near the "
                 f"{_PLACES[rng.integers(len(_PLACES))]}")
        else:
            s = (f"a {_ADJECTIVES[rng.integers(len(_ADJECTIVES))]} "
                 f"{_ANIMALS[rng.integers(len(_ANIMALS))]} watched the "
                 f"{_NOUNS[rng.integers(len(_NOUNS))]}")
        sentences.append(s)
    return sentences


def write_synthetic_corpus(out_dir, n_train: int = 6000, n_valid: int = 600,
                           n_test: int = 600, seed: int = 1234,
                           skew: float = 4.0) -> dict:
    """Write train/valid/test splits plus the matching defining-set file.

    Returns the paths keyed by role.  Splits draw from disjoint substreams
    of the seed so they never share sentences positionally.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for role, count, sub in (("train", n_train, 1), ("valid", n_valid, 2), ("test", n_test, 3)):
        lines = synthetic_sentences(count, [seed, sub], skew=skew)
        p = out_dir / f"{role}.txt"
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths[role] = p
    ds = out_dir / "defining_sets.json"
    ds.write_text(json.dumps([list(p) for p in DEFINING_PAIRS], indent=2) + "\n",
                  encoding="utf-8")
    paths["defining_sets"] = ds
    return paths
