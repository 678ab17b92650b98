"""Corpus ingestion: tokenization, vocabulary, defining sets, stop words.

All structures here are immutable after construction and safe to share
across threads.  The token stream produced by this module is the canonical
input for counting, training, and generation.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestionError

log = logging.getLogger(__name__)

UNK_TOKEN = "<unk>"
EOS_TOKEN = "<eos>"


@dataclass(frozen=True)
class TokenizeScheme:
    """How raw text turns into tokens.

    ``ptb`` lowercases and emits one end-of-sentence marker per line,
    ``cased`` keeps case (WikiText-2 / CNN-DailyMail conventions), and
    ``plain`` is a bare whitespace split with no sentence markers.
    """

    lowercase: bool = False
    add_eos: bool = True

    @classmethod
    def named(cls, name: str) -> "TokenizeScheme":
        presets = {
            "ptb": cls(lowercase=True, add_eos=True),
            "cased": cls(lowercase=False, add_eos=True),
            "plain": cls(lowercase=False, add_eos=False),
        }
        try:
            return presets[name]
        except KeyError:
            raise ConfigError(
                f"unknown tokenize scheme {name!r}; expected one of {sorted(presets)}"
            ) from None


def tokenize(raw_text, scheme="ptb") -> list[str]:
    """Split raw text into a deterministic token sequence.

    Accepts ``str`` or UTF-8 ``bytes``.  Whitespace runs collapse to single
    separators; every line emits one end-of-sentence marker when the scheme
    requests it.
    """
    sch = TokenizeScheme.named(scheme) if isinstance(scheme, str) else scheme
    if isinstance(raw_text, (bytes, bytearray)):
        try:
            raw_text = bytes(raw_text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestionError("invalid UTF-8 input", byte_offset=exc.start) from None
    if raw_text == "":
        raise IngestionError("empty input")
    tokens: list[str] = []
    for line in raw_text.splitlines():
        if sch.lowercase:
            line = line.lower()
        tokens.extend(line.split())
        if sch.add_eos:
            tokens.append(EOS_TOKEN)
    if not tokens:
        raise IngestionError("input contains no tokens")
    return tokens


class Vocabulary:
    """Token <-> id mapping with per-token corpus frequencies.

    Ids are assigned by descending corpus frequency with lexicographic
    tie-break, so the mapping is a pure function of the multiset of tokens.
    The unknown and end-of-sentence markers are always present; when unseen
    in the corpus they are appended with a count of zero.
    """

    def __init__(self, id_to_token: list[str], counts) -> None:
        self.id_to_token = list(id_to_token)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        self.counts = np.asarray(counts, dtype=np.int64)
        if len(self.token_to_id) != len(self.id_to_token):
            raise ConfigError("vocabulary contains duplicate tokens")
        if self.counts.shape != (len(self.id_to_token),):
            raise ConfigError("vocabulary counts do not match token list")
        for special in (UNK_TOKEN, EOS_TOKEN):
            if special not in self.token_to_id:
                raise ConfigError(f"vocabulary is missing the {special} marker")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK_TOKEN]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS_TOKEN]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.unk_id, self.eos_id))

    def id(self, token: str) -> int:
        """Id of ``token``, falling back to the unknown marker."""
        return self.token_to_id.get(token, self.unk_id)

    def token(self, idx: int) -> str:
        return self.id_to_token[idx]

    def encode(self, tokens) -> np.ndarray:
        unk = self.unk_id
        get = self.token_to_id.get
        return np.fromiter((get(t, unk) for t in tokens), dtype=np.int32, count=len(tokens))

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]


def build_vocab(tokens) -> Vocabulary:
    """Build a :class:`Vocabulary` from a token sequence.

    Inputs here are expected to be pre-unked (PTB / WikiText releases), so
    the vocabulary is exactly the distinct-token set plus the special
    markers.
    """
    tokens = list(tokens)
    if not tokens:
        raise IngestionError("cannot build a vocabulary from an empty token sequence")
    freq = Counter(tokens)
    ordered = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    id_to_token = [t for t, _ in ordered]
    counts = [c for _, c in ordered]
    for special in (UNK_TOKEN, EOS_TOKEN):
        if special not in freq:
            id_to_token.append(special)
            counts.append(0)
    return Vocabulary(id_to_token, counts)


@dataclass(frozen=True)
class TokenStream:
    """An encoded corpus: ordered vocabulary ids plus provenance."""

    ids: np.ndarray
    vocab: Vocabulary
    source_name: str = "custom"

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int32)
        object.__setattr__(self, "ids", ids)
        if ids.ndim != 1 or ids.size == 0:
            raise IngestionError("token stream must be a non-empty 1-d id sequence")
        if ids.min() < 0 or ids.max() >= len(self.vocab):
            raise IngestionError("token stream contains ids outside the vocabulary")

    def __len__(self) -> int:
        return int(self.ids.size)

    @classmethod
    def from_tokens(cls, tokens, vocab: Vocabulary, source_name="custom") -> "TokenStream":
        return cls(vocab.encode(tokens), vocab, source_name)

    @classmethod
    def from_file(cls, path, vocab: Vocabulary, scheme="ptb", source_name=None) -> "TokenStream":
        path = Path(path)
        tokens = tokenize(path.read_bytes(), scheme)
        return cls(vocab.encode(tokens), vocab, source_name or path.stem)

    def to_text(self) -> str:
        """Inverse of tokenization: one sentence per line, markers removed."""
        eos = self.vocab.eos_id
        lines: list[str] = []
        current: list[str] = []
        for i in self.ids:
            if i == eos:
                lines.append(" ".join(current))
                current = []
            else:
                current.append(self.vocab.id_to_token[i])
        out = "\n".join(lines)
        if lines:
            out += "\n"
        if current:
            out += " ".join(current)
        return out


@dataclass(frozen=True)
class DefiningSets:
    """Gender-opposing word pairs surviving the vocabulary filter.

    ``pairs`` keeps the shipped order; ``male_set`` / ``female_set`` are the
    deduplicated sides.  Pairs with an out-of-vocabulary member are dropped
    (and logged) rather than mapped to the unknown marker.
    """

    pairs: tuple[tuple[str, str], ...]
    pair_ids: tuple[tuple[int, int], ...]
    male_set: frozenset[str]
    female_set: frozenset[str]
    male_ids: frozenset[int]
    female_ids: frozenset[int]
    dropped: tuple[tuple[str, str], ...] = ()

    @property
    def gendered_ids(self) -> frozenset[int]:
        return self.male_ids | self.female_ids

    @classmethod
    def from_pairs(cls, pairs, vocab: Vocabulary) -> "DefiningSets":
        seen = set()
        kept: list[tuple[str, str]] = []
        dropped: list[tuple[str, str]] = []
        for entry in pairs:
            if len(entry) != 2 or not all(isinstance(w, str) for w in entry):
                raise ConfigError(f"defining-set entry {entry!r} is not a word pair")
            m, f = entry[0].strip(), entry[1].strip()
            if not m or not f:
                raise ConfigError(f"defining-set entry {entry!r} has an empty member")
            if m == f:
                raise ConfigError(f"defining-set pair ({m!r}, {f!r}) repeats one word")
            if (m, f) in seen:
                log.warning("duplicate defining pair (%s, %s) ignored", m, f)
                continue
            seen.add((m, f))
            if m in vocab and f in vocab:
                kept.append((m, f))
            else:
                dropped.append((m, f))
                log.info("dropping defining pair (%s, %s): member missing from vocabulary", m, f)
        if not kept:
            raise ConfigError("no defining pairs survive the vocabulary filter")
        male = frozenset(m for m, _ in kept)
        female = frozenset(f for _, f in kept)
        if male & female:
            raise ConfigError(
                f"defining sets overlap between genders: {sorted(male & female)}"
            )
        return cls(
            pairs=tuple(kept),
            pair_ids=tuple((vocab.token_to_id[m], vocab.token_to_id[f]) for m, f in kept),
            male_set=male,
            female_set=female,
            male_ids=frozenset(vocab.token_to_id[m] for m in male),
            female_ids=frozenset(vocab.token_to_id[f] for f in female),
            dropped=tuple(dropped),
        )


def load_defining_sets(path, vocab: Vocabulary) -> DefiningSets:
    """Load a JSON array of [male, female] word pairs and filter by ``vocab``."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"defining-set file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"defining-set file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, list):
        raise ConfigError(f"defining-set file {path} must contain a JSON array of pairs")
    return DefiningSets.from_pairs(data, vocab)


@dataclass(frozen=True)
class StopWordList:
    """Tokens excluded as bias-score targets (gendered words are excluded separately)."""

    tokens: frozenset[str]

    def __contains__(self, token: str) -> bool:
        return token in self.tokens

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(sorted(self.tokens))

    def without(self, words) -> "StopWordList":
        return StopWordList(self.tokens - frozenset(words))


def load_stop_words(path, sets: DefiningSets | None = None) -> StopWordList:
    """Read one stop word per line; drops members of ``sets`` with a warning."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"stop-word file not found: {path}") from None
    words = frozenset(w for w in (line.strip() for line in raw.splitlines()) if w)
    if not words:
        raise ConfigError(f"stop-word file {path} is empty")
    stops = StopWordList(words)
    if sets is not None:
        overlap = words & (sets.male_set | sets.female_set)
        if overlap:
            log.warning(
                "stop-word list overlaps the defining sets; dropping %s", sorted(overlap)
            )
            stops = stops.without(overlap)
    return stops


def default_stop_words_path() -> Path:
    return Path(__file__).parent / "data" / "stopwords" / "english.txt"


def default_defining_sets_path(corpus_name: str) -> Path:
    name = corpus_name.lower().replace("/", "_").replace("-", "_")
    aliases = {
        "ptb": "ptb",
        "penn_treebank": "ptb",
        "wikitext_2": "wikitext2",
        "wikitext2": "wikitext2",
        "cnn_dailymail": "cnn_dailymail",
        "cnn_daily_mail": "cnn_dailymail",
    }
    if name not in aliases:
        raise ConfigError(f"no packaged defining sets for corpus {corpus_name!r}")
    return Path(__file__).parent / "data" / "defining_sets" / f"{aliases[name]}.json"


def subsample(stream: TokenStream, factor: int, seed) -> TokenStream:
    """Keep each sentence independently with probability 1/factor.

    Sentences are the end-of-sentence-delimited spans of the stream (a
    trailing span with no marker counts as one sentence).  Deterministic
    for a fixed seed.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ConfigError(f"subsample factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return stream
    ids = stream.ids
    ends = np.flatnonzero(ids == stream.vocab.eos_id)
    starts = np.concatenate(([0], ends + 1))
    stops = np.concatenate((ends + 1, [ids.size]))
    spans = [(a, b) for a, b in zip(starts, stops) if b > a]
    rng = np.random.default_rng(seed)
    keep = rng.random(len(spans)) < 1.0 / factor
    pieces = [ids[a:b] for (a, b), k in zip(spans, keep) if k]
    if not pieces:
        raise ConfigError(
            f"subsampling by {factor} produced an empty corpus ({len(spans)} sentences in)"
        )
    out = np.concatenate(pieces)
    return TokenStream(out, stream.vocab, f"{stream.source_name}/sub{factor}")
