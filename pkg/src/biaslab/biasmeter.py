"""Gendered co-occurrence counting, per-word bias scores, and amplification.

The core quantity is the weighted count c(w, g): how often candidate word w
appears in the context of gender-set g.  From those counts we form

    P(w|g) = (c(w,g) / sum_i c(w_i,g)) / (c(g) / sum_i c(w_i))

where the sums over i run over all candidate words (non-stop, non-gendered,
non-special), c(g) is the occurrence count of the gender-g tokens, and the
per-word bias score is the natural log-ratio ln(P(w|f) / P(w|m)).  Positive
scores mean female-skewed.  Words lacking a co-occurrence with either gender
are excluded rather than smoothed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DefiningSets, StopWordList, TokenStream
from .errors import (
    DegenerateRegressorError,
    MetricError,
    UndefinedProbabilityError,
)

# Exponential context weights below this contribute less than rounding error
# and are dropped so counting stays linear in the stream length.
WEIGHT_FLOOR = 1e-9

OUTLIER_STUDENTIZED_CUTOFF = 3.0


@dataclass(frozen=True)
class FixedContext:
    """Symmetric window of ``k`` tokens on each side, unit weights."""

    k: int = 10
    label = "fixed"

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise MetricError(f"fixed context requires k >= 1, got {self.k!r}")

    def max_distance(self, stream_len: int) -> int:
        return min(self.k, stream_len - 1)

    def weight(self, d: int) -> float:
        return 1.0

    def params(self) -> dict:
        return {"variant": "fixed", "k": self.k}


@dataclass(frozen=True)
class ExponentialContext:
    """Unbounded window with weights adjacent_weight * decay**(d-1)."""

    adjacent_weight: float = 0.05
    decay: float = 0.95
    label = "infinite"

    def __post_init__(self):
        if not 0.0 < self.adjacent_weight <= 1.0:
            raise MetricError(f"adjacent_weight must be in (0, 1], got {self.adjacent_weight!r}")
        if not 0.0 < self.decay < 1.0:
            raise MetricError(f"decay must be in (0, 1), got {self.decay!r}")

    def max_distance(self, stream_len: int) -> int:
        # largest d with weight(d) >= WEIGHT_FLOOR
        d = 1 + math.floor(math.log(WEIGHT_FLOOR / self.adjacent_weight) / math.log(self.decay))
        return min(max(d, 1), stream_len - 1)

    def weight(self, d: int) -> float:
        return self.adjacent_weight * self.decay ** (d - 1)

    def params(self) -> dict:
        return {
            "variant": "exponential",
            "adjacent_weight": self.adjacent_weight,
            "decay": self.decay,
        }


def make_scheme(label: str, **kwargs):
    if label in ("fixed",):
        return FixedContext(**kwargs)
    if label in ("infinite", "exponential"):
        return ExponentialContext(**kwargs)
    raise MetricError(f"unknown context scheme {label!r}")


class CooccurrenceTable:
    """Weighted counts c(w, g) plus the marginals P(w|g) needs.

    ``counts_f`` / ``counts_m`` are dense per-id arrays (integer for fixed
    windows, float for exponential); only candidate-word cells are ever
    incremented.  ``cf`` / ``cm`` count occurrences of gendered tokens and
    ``target_occurrences`` counts occurrences of candidate words.
    """

    def __init__(self, vocab, scheme, counts_f, counts_m, target_occurrences, cf, cm, source):
        self.vocab = vocab
        self.scheme = scheme
        self.counts_f = counts_f
        self.counts_m = counts_m
        self.target_occurrences = target_occurrences
        self.cf = int(cf)
        self.cm = int(cm)
        self.source = source

    @property
    def sum_cwf(self):
        return self.counts_f.sum()

    @property
    def sum_cwm(self):
        return self.counts_m.sum()

    @property
    def total_targets(self) -> int:
        return int(self.target_occurrences.sum())

    def _nonzero_dict(self, arr) -> dict:
        idx = np.flatnonzero(arr)
        return {self.vocab.id_to_token[i]: arr[i].item() for i in idx}

    @property
    def cwf(self) -> dict:
        return self._nonzero_dict(self.counts_f)

    @property
    def cwm(self) -> dict:
        return self._nonzero_dict(self.counts_m)

    def count(self, word: str, gender: str):
        arr = _gender_array(self, gender)
        if word not in self.vocab:
            return arr.dtype.type(0).item()
        return arr[self.vocab.token_to_id[word]].item()


def _gender_array(table: CooccurrenceTable, gender: str):
    g = gender.lower()
    if g in ("f", "female"):
        return table.counts_f
    if g in ("m", "male"):
        return table.counts_m
    raise MetricError(f"unknown gender label {gender!r}")


def count_cooccurrences(
    stream: TokenStream,
    sets: DefiningSets,
    stops: StopWordList,
    scheme,
) -> CooccurrenceTable:
    """Count gendered co-occurrences over the raw stream.

    Windows are symmetric, truncate at the stream boundaries, and may cross
    sentence markers; markers themselves are never targets.  For every
    (candidate occurrence, gendered occurrence) pair at token distance d the
    candidate's cell gains ``scheme.weight(d)`` (weight 1 within the fixed
    window, exponentially decaying otherwise).
    """
    vocab = stream.vocab
    ids = stream.ids
    n = ids.size
    V = len(vocab)

    is_male = np.zeros(V, dtype=bool)
    is_male[list(sets.male_ids)] = True
    is_female = np.zeros(V, dtype=bool)
    is_female[list(sets.female_ids)] = True
    is_stop = np.zeros(V, dtype=bool)
    stop_ids = [vocab.token_to_id[t] for t in stops if t in vocab]
    is_stop[stop_ids] = True
    is_special = np.zeros(V, dtype=bool)
    is_special[list(vocab.special_ids)] = True
    # gendered status wins over an overlapping stop entry
    is_stop &= ~(is_male | is_female)
    is_candidate = ~(is_male | is_female | is_stop | is_special)

    pos_m = np.flatnonzero(is_male[ids])
    pos_f = np.flatnonzero(is_female[ids])
    cand_mask = is_candidate[ids]

    integer_counts = isinstance(scheme, FixedContext)
    dtype = np.int64 if integer_counts else np.float64
    counts_f = np.zeros(V, dtype=dtype)
    counts_m = np.zeros(V, dtype=dtype)

    max_d = scheme.max_distance(n) if n > 1 else 0
    for d in range(1, max_d + 1):
        w = 1 if integer_counts else scheme.weight(d)
        for sign in (-1, 1):
            for pos_g, counts_g in ((pos_m, counts_m), (pos_f, counts_f)):
                if pos_g.size == 0:
                    continue
                nb = pos_g + sign * d
                nb = nb[(nb >= 0) & (nb < n)]
                nb = nb[cand_mask[nb]]
                if nb.size:
                    np.add.at(counts_g, ids[nb], w)

    target_occ = np.bincount(ids[cand_mask], minlength=V).astype(np.int64)
    return CooccurrenceTable(
        vocab=vocab,
        scheme=scheme,
        counts_f=counts_f,
        counts_m=counts_m,
        target_occurrences=target_occ,
        cf=pos_f.size,
        cm=pos_m.size,
        source=stream.source_name,
    )


def conditional_probability(table: CooccurrenceTable, word: str, gender: str) -> float:
    """P(w|g) as a frequency ratio; non-negative, not bounded by 1."""
    arr = _gender_array(table, gender)
    c_g = table.cf if arr is table.counts_f else table.cm
    g_name = "f" if arr is table.counts_f else "m"
    if c_g == 0:
        raise UndefinedProbabilityError(f"c({g_name}) is zero: no gendered tokens in corpus")
    sum_cwg = arr.sum()
    if sum_cwg == 0:
        raise UndefinedProbabilityError(f"sum_i c(w_i, {g_name}) is zero: no co-occurrences")
    total = table.total_targets
    if total == 0:
        raise UndefinedProbabilityError("sum_i c(w_i) is zero: no candidate words in corpus")
    c_wg = arr[table.vocab.token_to_id[word]] if word in table.vocab else 0
    return float((c_wg / sum_cwg) / (c_g / total))


@dataclass(frozen=True)
class BiasScoreTable:
    """Per-word log-ratio bias scores for one corpus under one scheme."""

    scores: dict
    excluded: frozenset
    scheme: object
    source: str

    def __len__(self) -> int:
        return len(self.scores)


def bias_scores(table: CooccurrenceTable) -> BiasScoreTable:
    """Score every candidate word with co-occurrences on both gender sides.

    score(w) = ln P(w|f) - ln P(w|m); candidates with a zero count for
    either gender land in ``excluded``.
    """
    if table.cf == 0 or table.cm == 0:
        raise MetricError(
            f"cannot score bias: c(f)={table.cf}, c(m)={table.cm}; "
            "both gender sets must occur in the corpus"
        )
    cf_arr = table.counts_f
    cm_arr = table.counts_m
    sum_f = cf_arr.sum()
    sum_m = cm_arr.sum()
    occurred = table.target_occurrences > 0
    scored_mask = occurred & (cf_arr > 0) & (cm_arr > 0)
    scored_ids = np.flatnonzero(scored_mask)
    # the total-candidate term of P(w|g) cancels in the ratio
    if scored_ids.size:
        vals = (
            np.log(cf_arr[scored_ids].astype(np.float64))
            - np.log(cm_arr[scored_ids].astype(np.float64))
            - math.log(sum_f)
            + math.log(sum_m)
            - math.log(table.cf)
            + math.log(table.cm)
        )
    else:
        vals = np.empty(0)
    scores = {table.vocab.id_to_token[i]: float(v) for i, v in zip(scored_ids, vals)}
    excluded_ids = np.flatnonzero(occurred & ~scored_mask)
    excluded = frozenset(table.vocab.id_to_token[i] for i in excluded_ids)
    return BiasScoreTable(scores=scores, excluded=excluded, scheme=table.scheme, source=table.source)


@dataclass(frozen=True)
class BiasSummary:
    """mu = mean(|score|), sigma = population stdev of signed scores."""

    mu: float
    sigma: float
    n: int


def summarize(scores: BiasScoreTable) -> BiasSummary:
    if not scores.scores:
        raise MetricError("cannot summarize an empty bias-score table")
    vals = np.fromiter(scores.scores.values(), dtype=np.float64, count=len(scores.scores))
    return BiasSummary(mu=float(np.mean(np.abs(vals))), sigma=float(np.std(vals)), n=vals.size)


@dataclass(frozen=True)
class AmplificationFit:
    """OLS of generated-text scores on training scores after one outlier pass."""

    beta: float
    intercept: float
    n_used: int
    n_outliers: int
    r_squared: float


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm = x.mean()
    ym = y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise DegenerateRegressorError("training bias scores have zero variance")
    beta = float(np.sum((x - xm) * (y - ym)) / sxx)
    return beta, float(ym - beta * xm)


def fit_amplification(train: BiasScoreTable, generated: BiasScoreTable) -> AmplificationFit:
    """Regress generated scores on training scores over the common words.

    One deterministic outlier pass: fit, drop points with absolute
    internally studentized residual above 3, refit once.
    """
    common = [w for w in train.scores if w in generated.scores]
    if len(common) < 3:
        raise MetricError(
            f"amplification fit needs at least 3 words scored in both tables, got {len(common)}"
        )
    x = np.array([train.scores[w] for w in common], dtype=np.float64)
    y = np.array([generated.scores[w] for w in common], dtype=np.float64)

    beta, intercept = _ols(x, y)
    resid = y - (beta * x + intercept)
    n = x.size
    sse = float(np.sum(resid**2))
    s2 = sse / (n - 2)
    if s2 > 0.0:
        sxx = float(np.sum((x - x.mean()) ** 2))
        leverage = 1.0 / n + (x - x.mean()) ** 2 / sxx
        denom = np.sqrt(s2 * np.maximum(1.0 - leverage, np.finfo(float).tiny))
        keep = np.abs(resid / denom) <= OUTLIER_STUDENTIZED_CUTOFF
    else:
        keep = np.ones(n, dtype=bool)

    if keep.sum() < 2:
        raise DegenerateRegressorError("outlier pass removed too many points to refit")
    if keep.sum() < n:
        beta, intercept = _ols(x[keep], y[keep])

    xk, yk = x[keep], y[keep]
    resid_k = yk - (beta * xk + intercept)
    sst = float(np.sum((yk - yk.mean()) ** 2))
    r2 = 1.0 if sst == 0.0 else 1.0 - float(np.sum(resid_k**2)) / sst
    return AmplificationFit(
        beta=beta,
        intercept=intercept,
        n_used=int(keep.sum()),
        n_outliers=int(n - keep.sum()),
        r_squared=r2,
    )


def write_scores_csv(scores: BiasScoreTable, table: CooccurrenceTable, path) -> None:
    """Dump scored words (vocabulary-id order) as word, c_wf, c_wm, bias_score."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["word", "c_wf", "c_wm", "bias_score"])
        for word, score in scores.scores.items():
            writer.writerow(
                [word, table.count(word, "f"), table.count(word, "m"), repr(score)]
            )


def summary_dict(summary: BiasSummary, scheme, fit: AmplificationFit | None = None) -> dict:
    out = {"scheme": scheme.label, "mu": summary.mu, "sigma": summary.sigma, "n": summary.n}
    if fit is not None:
        out["beta"] = fit.beta
        out["intercept"] = fit.intercept
        out["n_outliers"] = fit.n_outliers
    return out


def write_summary_json(summary: BiasSummary, scheme, path, fit: AmplificationFit | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(summary_dict(summary, scheme, fit), fh, indent=2)
        fh.write("\n")
