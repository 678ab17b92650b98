"""Corpus ingestion: tokenization, vocabulary, word lists, subsampling."""

import json

import numpy as np
import pytest

import biaslab as bl
from biaslab import corpus as C
from biaslab.errors import ConfigError, IngestionError

from conftest import PTB_TRAIN, WT2_TRAIN, require_corpus


def independent_token_count(text: str) -> int:
    """One-pass oracle: whitespace tokens plus one marker per line."""
    count = 0
    for line in text.splitlines():
        count += len(line.split()) + 1
    return count


class TestTokenize:
    def test_ptb_scheme_line(self):
        assert bl.tokenize("he went home\n", "ptb") == ["he", "went", "home", "<eos>"]

    def test_lowercasing_is_ptb_only(self):
        assert bl.tokenize("The Dog\n", "ptb") == ["the", "dog", "<eos>"]
        assert bl.tokenize("The Dog\n", "cased") == ["The", "Dog", "<eos>"]

    def test_whitespace_runs_collapse(self):
        assert bl.tokenize("a   b\t c\n", "plain") == ["a", "b", "c"]

    def test_empty_input_rejected(self):
        with pytest.raises(IngestionError, match="empty"):
            bl.tokenize("", "ptb")

    def test_invalid_utf8_reports_offset(self):
        with pytest.raises(IngestionError) as exc:
            bl.tokenize(b"ok then \xff\xfe broken", "ptb")
        assert exc.value.byte_offset == 8

    def test_token_count_matches_independent_recount(self):
        rng = np.random.default_rng(11)
        words = [f"w{i}" for i in range(40)]
        lines = [" ".join(rng.choice(words, size=rng.integers(1, 12))) for _ in range(100)]
        text = "\n".join(lines) + "\n"
        assert len(bl.tokenize(text, "ptb")) == independent_token_count(text)

    def test_blank_lines_emit_markers(self):
        assert bl.tokenize("a\n\nb\n", "ptb") == ["a", "<eos>", "<eos>", "b", "<eos>"]


class TestBuildVocab:
    def test_frequency_order_with_tiebreak(self):
        vocab = bl.build_vocab(["a", "b", "a"])
        assert vocab.counts[vocab.token_to_id["a"]] == 2
        assert vocab.counts[vocab.token_to_id["b"]] == 1
        assert vocab.token_to_id["a"] < vocab.token_to_id["b"]

    def test_single_token(self):
        vocab = bl.build_vocab(["x"])
        assert vocab.counts[vocab.token_to_id["x"]] == 1
        assert vocab.counts.sum() == 1

    def test_specials_registered_even_if_absent(self):
        vocab = bl.build_vocab(["x", "y"])
        assert "<unk>" in vocab and "<eos>" in vocab
        assert vocab.counts[vocab.unk_id] == 0

    def test_inverse_mappings(self):
        vocab = bl.build_vocab("the cat sat on the mat".split())
        for tok, idx in vocab.token_to_id.items():
            assert vocab.id_to_token[idx] == tok

    def test_sum_of_counts_is_corpus_length(self):
        tokens = "a b c a b a <eos>".split()
        vocab = bl.build_vocab(tokens)
        assert vocab.counts.sum() == len(tokens)

    def test_permutation_stability_over_documents(self):
        rng = np.random.default_rng(3)
        docs = [[f"w{rng.integers(0, 15)}" for _ in range(20)] for _ in range(10)]
        flat = [t for d in docs for t in d]
        shuffled_docs = [docs[i] for i in rng.permutation(len(docs))]
        flat2 = [t for d in shuffled_docs for t in d]
        v1, v2 = bl.build_vocab(flat), bl.build_vocab(flat2)
        assert v1.id_to_token == v2.id_to_token
        assert (v1.counts == v2.counts).all()

    def test_ptb_vocabulary_size(self):
        require_corpus(PTB_TRAIN, "PTB")
        tokens = bl.tokenize(PTB_TRAIN.read_bytes(), "ptb")
        vocab = bl.build_vocab(tokens)
        # 9,999 distinct words plus the sentence marker in the standard release
        assert len(vocab) == 10_000


class TestTokenStream:
    def test_round_trip_detokenize_retokenize(self):
        tokens = bl.tokenize("the cat sat\nthe <unk> ran\n", "ptb")
        vocab = bl.build_vocab(tokens)
        stream = bl.TokenStream.from_tokens(tokens, vocab, "t")
        back = bl.tokenize(stream.to_text(), "cased")
        assert (vocab.encode(back) == stream.ids).all()

    def test_empty_stream_rejected(self):
        vocab = bl.build_vocab(["a"])
        with pytest.raises(IngestionError):
            bl.TokenStream(np.array([], dtype=np.int32), vocab)

    def test_oov_maps_to_unk(self):
        vocab = bl.build_vocab(["a", "b"])
        stream = bl.TokenStream.from_tokens(["a", "zzz"], vocab)
        assert stream.ids[1] == vocab.unk_id


class TestDefiningSets:
    def make_vocab(self, extra=()):
        words = ["he", "she", "man", "woman", "wife", "husband", "king", "queen"]
        return bl.build_vocab(list(words) + list(extra))

    def test_packaged_ptb_list_loads_fully(self):
        pairs = json.loads(C.default_defining_sets_path("ptb").read_text())
        vocab = bl.build_vocab([w for p in pairs for w in p])
        sets = C.DefiningSets.from_pairs(pairs, vocab)
        assert len(sets.pairs) == 15
        for expected in [("he", "she"), ("man", "woman"), ("wife", "husband")]:
            assert expected in sets.pairs

    def test_oov_pairs_dropped(self):
        vocab = self.make_vocab()
        sets = C.DefiningSets.from_pairs([("he", "she"), ("uncle", "aunt")], vocab)
        assert sets.pairs == (("he", "she"),)
        assert sets.dropped == (("uncle", "aunt"),)

    def test_zero_surviving_pairs_is_fatal(self):
        vocab = bl.build_vocab(["king"])
        with pytest.raises(ConfigError, match="no defining pairs"):
            C.DefiningSets.from_pairs([("king", "queen")], vocab)

    def test_duplicates_deduplicated(self):
        vocab = self.make_vocab()
        sets = C.DefiningSets.from_pairs([("he", "she"), ("he", "she")], vocab)
        assert sets.pairs == (("he", "she"),)

    def test_filtering_is_idempotent(self):
        vocab = self.make_vocab()
        first = C.DefiningSets.from_pairs(
            [("he", "she"), ("man", "woman"), ("uncle", "aunt")], vocab
        )
        second = C.DefiningSets.from_pairs(first.pairs, vocab)
        assert second.pairs == first.pairs
        assert second.male_set == first.male_set

    def test_gender_sets_disjoint(self):
        vocab = self.make_vocab()
        with pytest.raises(ConfigError, match="overlap"):
            C.DefiningSets.from_pairs([("he", "she"), ("she", "woman")], vocab)

    def test_load_from_json_file(self, tmp_path):
        vocab = self.make_vocab()
        path = tmp_path / "pairs.json"
        path.write_text(json.dumps([["he", "she"], ["king", "queen"]]))
        sets = bl.load_defining_sets(path, vocab)
        assert sets.male_ids == frozenset(
            {vocab.token_to_id["he"], vocab.token_to_id["king"]}
        )

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            bl.load_defining_sets(tmp_path / "nope.json", self.make_vocab())

    def test_ptb_list_against_real_vocabulary(self):
        require_corpus(PTB_TRAIN, "PTB")
        vocab = bl.build_vocab(bl.tokenize(PTB_TRAIN.read_bytes(), "ptb"))
        sets = bl.load_defining_sets(C.default_defining_sets_path("ptb"), vocab)
        assert len(sets.pairs) == 15
        for expected in [("he", "she"), ("man", "woman"), ("wife", "husband")]:
            assert expected in sets.pairs

    def test_wikitext2_list_against_membership_scan(self):
        require_corpus(WT2_TRAIN, "WikiText-2")
        tokens = bl.tokenize(WT2_TRAIN.read_bytes(), "cased")
        vocab = bl.build_vocab(tokens)
        sets = bl.load_defining_sets(C.default_defining_sets_path("wikitext2"), vocab)
        # oracle: survivors are exactly the distinct pairs with both members
        # present in a direct scan of the corpus token set
        present = set(tokens)
        pairs = json.loads(C.default_defining_sets_path("wikitext2").read_text())
        deduped = list(dict.fromkeys((m, f) for m, f in pairs))
        survivors = [(m, f) for m, f in deduped if m in present and f in present]
        assert list(sets.pairs) == survivors


class TestStopWords:
    def test_packaged_list_loads(self):
        stops = bl.load_stop_words(C.default_stop_words_path())
        assert "the" in stops
        assert 150 < len(stops) < 200

    def test_overlap_with_defining_sets_dropped(self, tmp_path):
        vocab = bl.build_vocab(["he", "she", "the"])
        sets = C.DefiningSets.from_pairs([("he", "she")], vocab)
        path = tmp_path / "stops.txt"
        path.write_text("the\nhe\n")
        stops = bl.load_stop_words(path, sets)
        assert "the" in stops and "he" not in stops

    def test_packaged_list_never_overlaps_packaged_sets(self):
        stops = bl.load_stop_words(C.default_stop_words_path())
        for name in ("ptb", "wikitext2", "cnn_dailymail"):
            pairs = json.loads(C.default_defining_sets_path(name).read_text())
            gendered = {w for p in pairs for w in p}
            assert not (stops.tokens & gendered)


class TestSubsample:
    def make_stream(self, n_sentences, seed=0):
        rng = np.random.default_rng(seed)
        lines = [" ".join(f"w{rng.integers(0, 30)}" for _ in range(rng.integers(2, 8)))
                 for _ in range(n_sentences)]
        tokens = bl.tokenize("\n".join(lines) + "\n", "ptb")
        vocab = bl.build_vocab(tokens)
        return bl.TokenStream.from_tokens(tokens, vocab, "s")

    def test_factor_one_is_identity(self):
        stream = self.make_stream(50)
        out = bl.subsample(stream, 1, seed=123)
        assert (out.ids == stream.ids).all()

    def test_factor_zero_rejected(self):
        with pytest.raises(ConfigError):
            bl.subsample(self.make_stream(10), 0, seed=1)

    def test_deterministic_for_fixed_seed(self):
        stream = self.make_stream(1000)
        a = bl.subsample(stream, 100, seed=5)
        b = bl.subsample(stream, 100, seed=5)
        assert (a.ids == b.ids).all()
        c = bl.subsample(stream, 100, seed=6)
        assert len(a) != len(c) or not (a.ids == c.ids).all()

    def test_kept_sentences_are_contiguous_originals(self):
        stream = self.make_stream(200)
        out = bl.subsample(stream, 4, seed=2)
        text_sentences = stream.to_text().splitlines()
        kept = out.to_text().splitlines()
        assert all(s in text_sentences for s in kept)

    def test_binomial_mean_over_200_seeds(self):
        n, factor = 400, 4
        stream = self.make_stream(n)
        counts = []
        for seed in range(200):
            try:
                out = bl.subsample(stream, factor, seed=seed)
            except ConfigError:
                counts.append(0)
                continue
            counts.append(out.to_text().count("\n"))
        p = 1.0 / factor
        se_mean = np.sqrt(n * p * (1 - p) / 200)
        assert abs(np.mean(counts) - n * p) < 5 * se_mean

    def test_empty_outcome_rejected(self):
        stream = self.make_stream(1)
        with pytest.raises(ConfigError, match="empty"):
            # factor far above the sentence count forces an empty draw
            for seed in range(200):
                bl.subsample(stream, 10_000_000, seed=seed)
