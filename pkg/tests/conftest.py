"""Shared fixtures: tiny corpora, data-dir resolution, acceptance summary."""

import os
from pathlib import Path

import numpy as np
import pytest

import biaslab as bl
from biaslab import corpus as C
from biaslab import synth

# Real-corpus files are looked up under $BIASLAB_DATA_DIR (default ./data):
#   <data>/ptb/{ptb.train.txt,ptb.valid.txt,ptb.test.txt}
#   <data>/wikitext-2/{wiki.train.tokens,wiki.valid.tokens,wiki.test.tokens}
DATA_DIR = Path(os.environ.get("BIASLAB_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))

PTB_TRAIN = DATA_DIR / "ptb" / "ptb.train.txt"
WT2_TRAIN = DATA_DIR / "wikitext-2" / "wiki.train.tokens"


def require_corpus(path: Path, name: str):
    if not path.is_file():
        pytest.skip(f"{name} corpus not present at {path}; see README for fetch instructions")


@pytest.fixture(scope="session")
def toy_stream():
    """The 9-token worked example used throughout the metric tests."""
    tokens = "he plays . he plays . she plays .".split()
    vocab = bl.build_vocab(tokens)
    stream = bl.TokenStream.from_tokens(tokens, vocab, "toy")
    sets = C.DefiningSets.from_pairs([("he", "she")], vocab)
    stops = C.StopWordList(frozenset({"."}))
    return stream, sets, stops


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """Small synthetic gendered corpus shared by training tests."""
    root = tmp_path_factory.mktemp("synth")
    paths = synth.write_synthetic_corpus(root, n_train=900, n_valid=150, n_test=150, seed=7)
    tokens = bl.tokenize(paths["train"].read_bytes(), "ptb")
    vocab = bl.build_vocab(tokens)
    train = bl.TokenStream.from_tokens(tokens, vocab, "synth")
    valid = bl.TokenStream.from_file(paths["valid"], vocab, "ptb", "valid")
    sets = bl.load_defining_sets(paths["defining_sets"], vocab)
    stops = bl.load_stop_words(C.default_stop_words_path(), sets)
    return {"paths": paths, "vocab": vocab, "train": train, "valid": valid,
            "sets": sets, "stops": stops}


# ---- acceptance reporting ------------------------------------------------

_ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def record_acceptance(criterion: str, outcome: str, detail: str = ""):
    _ACCEPTANCE_RESULTS.append((criterion, outcome, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, outcome, detail in _ACCEPTANCE_RESULTS:
        line = f"{criterion}: {outcome}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
