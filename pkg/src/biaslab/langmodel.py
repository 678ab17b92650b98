"""Word-level LSTM language model trained with the bias penalty.

A stack of plain LSTM layers over a trained input embedding, with the last
layer sized to the embedding dim so the softmax head is a V x d matrix that
can optionally be tied to the input embedding.  Training is truncated BPTT
with SGD and global gradient-norm clipping; every optimizer step the
defining-set difference matrix and gender subspace are recomputed from the
current embeddings and 2*lambda*N B B^T is added to the embedding gradient
(the subspace is a constant of the step).  All math is float64 and fully
deterministic for fixed seeds.
"""

from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import DefiningSets, TokenStream, Vocabulary
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .genderspace import (
    GenderSubspace,
    RegularizerConfig,
    build_difference_matrix,
    gender_subspace,
    regularizer_gradient,
    regularizer_value,
)

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"BIASLABLM1\n"

# fixed offsets deriving independent named random streams from one seed
_DROPOUT_STREAM = 303
_GENERATE_STREAM = 404


@dataclass
class LMConfig:
    """Architecture and optimization settings.

    ``dropout`` is the drop probability applied to the embedding output
    during training.  The last LSTM layer has ``embed_dim`` units (the two
    below use ``hidden``) so input and output embeddings share a width.
    """

    layers: int = 3
    hidden: int = 64
    embed_dim: int = 32
    tie_weights: bool = False
    learning_rate: float = 2.0
    batch_size: int = 16
    bptt_len: int = 16
    epochs: int = 10
    dropout: float = 0.0
    seed: int = 0
    reg: RegularizerConfig = field(default_factory=RegularizerConfig)
    grad_clip: float = 0.25
    early_stop_patience: int | None = None
    divergence_threshold: float = 1e4

    def __post_init__(self):
        for name in ("layers", "hidden", "embed_dim", "batch_size", "bptt_len", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"LMConfig.{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if isinstance(self.reg, dict):
            self.reg = RegularizerConfig.from_dict(self.reg)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.hidden] * (self.layers - 1) + [self.embed_dim]

    @property
    def input_sizes(self) -> list[int]:
        return [self.embed_dim] + self.layer_sizes[:-1]

    @classmethod
    def desk_scale(cls, **overrides) -> "LMConfig":
        return cls(**{"layers": 3, "hidden": 64, "embed_dim": 32, **overrides})

    @classmethod
    def paper_scale(cls, **overrides) -> "LMConfig":
        # reference dims for full-size runs; far beyond desk-scale budgets
        base = {
            "layers": 3,
            "hidden": 1150,
            "embed_dim": 400,
            "learning_rate": 30.0,
            "batch_size": 40,
            "bptt_len": 70,
            "epochs": 750,
        }
        return cls(**{**base, **overrides})

    def to_dict(self) -> dict:
        d = {
            "layers": self.layers,
            "hidden": self.hidden,
            "embed_dim": self.embed_dim,
            "tie_weights": self.tie_weights,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "bptt_len": self.bptt_len,
            "epochs": self.epochs,
            "dropout": self.dropout,
            "seed": self.seed,
            "reg": self.reg.to_dict(),
            "grad_clip": self.grad_clip,
            "early_stop_patience": self.early_stop_patience,
            "divergence_threshold": self.divergence_threshold,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LMConfig":
        d = dict(d)
        if "reg" in d and isinstance(d["reg"], dict):
            d["reg"] = RegularizerConfig.from_dict(d["reg"])
        return cls(**d)


class LanguageModel:
    """Parameter container plus forward machinery."""

    def __init__(self, config: LMConfig, vocab: Vocabulary, params: dict):
        self.config = config
        self.vocab = vocab
        self.params = params

    def param_names(self) -> list[str]:
        names = ["emb_in"]
        for l in range(self.config.layers):
            names += [f"wx{l}", f"wh{l}", f"b{l}"]
        if not self.config.tie_weights:
            names.append("emb_out")
        names.append("b_out")
        return names

    @property
    def input_embedding(self) -> np.ndarray:
        return self.params["emb_in"]

    @property
    def output_embedding(self) -> np.ndarray:
        return self.params["emb_in"] if self.config.tie_weights else self.params["emb_out"]

    def zero_state(self, batch: int) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (np.zeros((batch, h)), np.zeros((batch, h))) for h in self.config.layer_sizes
        ]

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def forward(self, x: np.ndarray, state, drop_rng=None):
        """Logits (T, B, V), new state, and the backward cache for x (T, B)."""
        return _forward(self, x, state, drop_rng=drop_rng)

    def step(self, tokens: np.ndarray, state):
        """Single-timestep logits (B, V) and new state for current tokens (B,)."""
        return _step_logits(self, tokens, state)


def init_model(config: LMConfig, vocab: Vocabulary, seed=None) -> LanguageModel:
    """Fresh model: embeddings uniform(-0.1, 0.1), gates uniform(+-1/sqrt(H))."""
    if len(vocab) == 0:
        raise ConfigError("cannot initialize a model over an empty vocabulary")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    V = len(vocab)
    params: dict = {"emb_in": rng.uniform(-0.1, 0.1, size=(V, config.embed_dim))}
    for l, (n_in, n_h) in enumerate(zip(config.input_sizes, config.layer_sizes)):
        bound = 1.0 / np.sqrt(n_h)
        params[f"wx{l}"] = rng.uniform(-bound, bound, size=(4 * n_h, n_in))
        params[f"wh{l}"] = rng.uniform(-bound, bound, size=(4 * n_h, n_h))
        params[f"b{l}"] = rng.uniform(-bound, bound, size=4 * n_h)
    if not config.tie_weights:
        params["emb_out"] = rng.uniform(-0.1, 0.1, size=(V, config.embed_dim))
    params["b_out"] = np.zeros(V)
    return LanguageModel(config, vocab, params)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(model: LanguageModel, x: np.ndarray, h0, drop_rng=None):
    """Run the stack over x (T, B) from state h0; returns logits, state, cache."""
    cfg = model.config
    p = model.params
    T, B = x.shape
    emb = p["emb_in"][x]
    drop_mask = None
    if drop_rng is not None and cfg.dropout > 0.0:
        keep = 1.0 - cfg.dropout
        drop_mask = (drop_rng.random(emb.shape) < keep) / keep
        emb = emb * drop_mask
    inputs = emb
    layer_caches = []
    state_out = []
    for l, n_h in enumerate(cfg.layer_sizes):
        wx, wh, b = p[f"wx{l}"], p[f"wh{l}"], p[f"b{l}"]
        h, c = h0[l]
        gi = inputs @ wx.T + b  # (T, B, 4H): input part of all gates at once
        I = np.empty((T, B, n_h))
        F = np.empty((T, B, n_h))
        G = np.empty((T, B, n_h))
        O = np.empty((T, B, n_h))
        C = np.empty((T, B, n_h))
        TC = np.empty((T, B, n_h))
        H = np.empty((T, B, n_h))
        for t in range(T):
            z = gi[t] + h @ wh.T
            I[t] = _sigmoid(z[:, :n_h])
            F[t] = _sigmoid(z[:, n_h : 2 * n_h])
            G[t] = np.tanh(z[:, 2 * n_h : 3 * n_h])
            O[t] = _sigmoid(z[:, 3 * n_h :])
            c = F[t] * c + I[t] * G[t]
            C[t] = c
            TC[t] = np.tanh(c)
            h = O[t] * TC[t]
            H[t] = h
        layer_caches.append(
            {"inputs": inputs, "I": I, "F": F, "G": G, "O": O, "C": C, "TC": TC,
             "H": H, "h0": h0[l][0], "c0": h0[l][1]}
        )
        state_out.append((h, c))
        inputs = H
    emb_out = model.output_embedding
    logits = inputs @ emb_out.T + p["b_out"]
    cache = {"x": x, "drop_mask": drop_mask, "layers": layer_caches, "top": inputs}
    return logits, state_out, cache


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Penalty:
    """One frozen-subspace bias penalty applied to an embedding parameter."""

    param: str
    rows: np.ndarray  # boolean mask over vocabulary rows (the N membership)
    space: GenderSubspace
    lam: float


def loss_and_gradients(model: LanguageModel, x: np.ndarray, y: np.ndarray, h0=None,
                       penalties=(), drop_rng=None):
    """Total loss (mean token cross-entropy + penalties) and all gradients.

    The penalties' subspaces are treated as constants, so each contributes
    exactly 2*lambda*N B B^T to its embedding rows.  Returns
    (total_loss, ce_loss, reg_raw, grads, final_state).
    """
    cfg = model.config
    p = model.params
    if h0 is None:
        h0 = model.zero_state(x.shape[1])
    logits, state, cache = _forward(model, x, h0, drop_rng=drop_rng)
    T, B = x.shape
    logp = _log_softmax(logits)
    rows = np.arange(T)[:, None]
    cols = np.arange(B)[None, :]
    ce = float(-logp[rows, cols, y].mean())

    reg_raw = 0.0
    reg_loss = 0.0
    for pen in penalties:
        raw = regularizer_value(p[pen.param][pen.rows], pen.space, 1.0)
        reg_raw += raw
        reg_loss += pen.lam * raw

    total = ce + reg_loss

    # ----- backward -----
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    probs = np.exp(logp)
    dlogits = probs
    dlogits[rows, cols, y] -= 1.0
    dlogits /= T * B

    top = cache["top"]
    d_flat = dlogits.reshape(T * B, -1)
    top_flat = top.reshape(T * B, -1)
    emb_out_key = "emb_in" if cfg.tie_weights else "emb_out"
    grads[emb_out_key] += d_flat.T @ top_flat
    grads["b_out"] += d_flat.sum(axis=0)
    dh_ext = (dlogits @ model.output_embedding).reshape(T, B, -1)

    for l in reversed(range(cfg.layers)):
        lc = cache["layers"][l]
        n_h = cfg.layer_sizes[l]
        wx, wh = p[f"wx{l}"], p[f"wh{l}"]
        I, F, G, O, C, TC = lc["I"], lc["F"], lc["G"], lc["O"], lc["C"], lc["TC"]
        dz_all = np.empty((T, B, 4 * n_h))
        dh_rec = np.zeros((B, n_h))
        dc_rec = np.zeros((B, n_h))
        for t in reversed(range(T)):
            dh = dh_ext[t] + dh_rec
            tc = TC[t]
            do = dh * tc
            dc = dc_rec + dh * O[t] * (1.0 - tc * tc)
            c_prev = C[t - 1] if t > 0 else lc["c0"]
            df = dc * c_prev
            di = dc * G[t]
            dg = dc * I[t]
            dc_rec = dc * F[t]
            dz = dz_all[t]
            dz[:, :n_h] = di * I[t] * (1.0 - I[t])
            dz[:, n_h : 2 * n_h] = df * F[t] * (1.0 - F[t])
            dz[:, 2 * n_h : 3 * n_h] = dg * (1.0 - G[t] * G[t])
            dz[:, 3 * n_h :] = do * O[t] * (1.0 - O[t])
            dh_rec = dz @ wh
        h_prev = np.concatenate((lc["h0"][None], lc["H"][:-1]), axis=0)
        dz_flat = dz_all.reshape(T * B, 4 * n_h)
        grads[f"wx{l}"] += dz_flat.T @ lc["inputs"].reshape(T * B, -1)
        grads[f"wh{l}"] += dz_flat.T @ h_prev.reshape(T * B, n_h)
        grads[f"b{l}"] += dz_flat.sum(axis=0)
        dh_ext = (dz_all @ wx).reshape(T, B, -1)

    d_emb = dh_ext  # gradient w.r.t. the (possibly dropped) embedding output
    if cache["drop_mask"] is not None:
        d_emb = d_emb * cache["drop_mask"]
    np.add.at(grads["emb_in"], cache["x"], d_emb)

    for pen in penalties:
        grads[pen.param][pen.rows] += regularizer_gradient(
            p[pen.param][pen.rows], pen.space, pen.lam
        )

    return total, ce, reg_raw, grads, state


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place to a global L2 norm of at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return float(norm)


def batchify(ids: np.ndarray, batch_size: int) -> np.ndarray:
    """Arrange the stream into batch_size parallel columns, dropping the tail."""
    n = (ids.size // batch_size) * batch_size
    if n == 0:
        raise ConfigError(
            f"stream of {ids.size} tokens is too short for batch size {batch_size}"
        )
    return ids[:n].reshape(batch_size, -1).T.copy()


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_ppl: float | None
    reg_value: float | None
    k: int | None


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    final_test_ppl: float | None = None
    wall_clock_sec: float = 0.0

    def epoch_dicts(self) -> list[dict]:
        return [
            {"epoch": e.epoch, "train_loss": e.train_loss, "val_ppl": e.val_ppl,
             "reg_value": e.reg_value, "k": e.k}
            for e in self.epochs
        ]


def _penalty_targets(cfg: LMConfig) -> list[str]:
    if cfg.reg.target == "input":
        names = ["emb_in"]
    elif cfg.reg.target == "output":
        names = ["emb_in" if cfg.tie_weights else "emb_out"]
    else:
        names = ["emb_in"] + ([] if cfg.tie_weights else ["emb_out"])
    out: list[str] = []
    for n in names:  # tied weights can alias both targets to one matrix
        if n not in out:
            out.append(n)
    return out


def _build_penalties(model: LanguageModel, sets: DefiningSets, rows: np.ndarray,
                     cfg: LMConfig) -> list[Penalty]:
    pens = []
    for name in _penalty_targets(cfg):
        diff = build_difference_matrix(model.params[name], sets)
        space = gender_subspace(diff, cfg.reg.variance_threshold)
        pens.append(Penalty(param=name, rows=rows, space=space, lam=cfg.reg.lam))
    return pens


def _reg_diagnostics(model: LanguageModel, sets: DefiningSets, rows: np.ndarray,
                     cfg: LMConfig) -> tuple[float, int]:
    """Unweighted ||N B||_F^2 summed over the targeted matrices, plus k."""
    raw = 0.0
    k = 0
    for name in _penalty_targets(cfg):
        diff = build_difference_matrix(model.params[name], sets)
        space = gender_subspace(diff, cfg.reg.variance_threshold)
        raw += regularizer_value(model.params[name][rows], space, 1.0)
        k = space.k
    return raw, k


def train(model: LanguageModel, stream: TokenStream, sets: DefiningSets | None,
          config: LMConfig | None = None, valid: TokenStream | None = None,
          test: TokenStream | None = None, log_path=None,
          eval_batch_size: int = 8) -> tuple[LanguageModel, TrainReport]:
    """Truncated-BPTT training with the per-step refreshed bias penalty.

    Each step: cross-entropy gradients over one bptt segment, subspace
    recomputation from the current embeddings, penalty gradient on the
    non-gendered rows, global clipping, SGD update.  Hidden state is carried
    across segments within an epoch.  Raises TrainingDivergedError on a
    non-finite or threshold-exceeding loss; a partial epoch log survives.
    """
    cfg = config or model.config
    if sets is None and cfg.reg.lam > 0:
        raise ConfigError("training with a positive regularizer weight requires defining sets")
    if len(stream) <= cfg.bptt_len * cfg.batch_size:
        raise ConfigError(
            f"stream of {len(stream)} tokens is too short for "
            f"bptt_len={cfg.bptt_len} x batch_size={cfg.batch_size}"
        )

    V = len(model.vocab)
    rows = np.ones(V, dtype=bool)
    if sets is not None:
        rows[list(sets.gendered_ids)] = False
    rows[list(model.vocab.special_ids)] = False

    data = batchify(stream.ids, cfg.batch_size)
    nb = data.shape[0]
    drop_rng = np.random.default_rng([cfg.seed, _DROPOUT_STREAM]) if cfg.dropout > 0 else None

    log_fh = None
    if log_path is not None:
        log_fh = open(log_path, "w", encoding="utf-8")

    report = TrainReport()
    best_val = np.inf
    best_params = None
    stale = 0
    t_start = time.perf_counter()
    global_step = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            state = model.zero_state(cfg.batch_size)
            nll_sum = 0.0
            n_targets = 0
            epoch_penalties: list[Penalty] = []
            if cfg.reg.lam > 0 and not cfg.reg.refresh:
                epoch_penalties = _build_penalties(model, sets, rows, cfg)
            for i in range(0, nb - 1, cfg.bptt_len):
                x = data[i : i + cfg.bptt_len]
                y = data[i + 1 : i + 1 + cfg.bptt_len]
                x = x[: y.shape[0]]
                if y.shape[0] == 0:
                    break
                if cfg.reg.lam > 0 and cfg.reg.refresh:
                    penalties = _build_penalties(model, sets, rows, cfg)
                else:
                    penalties = epoch_penalties
                total, ce, _, grads, state = loss_and_gradients(
                    model, x, y, h0=state, penalties=penalties, drop_rng=drop_rng
                )
                global_step += 1
                if not np.isfinite(total):
                    raise TrainingDivergedError("non-finite training loss", step=global_step)
                if total > cfg.divergence_threshold:
                    raise TrainingDivergedError(
                        f"training loss {total:.4g} exceeded the divergence "
                        f"threshold {cfg.divergence_threshold:g}",
                        step=global_step,
                    )
                clip_gradients(grads, cfg.grad_clip)
                lr = cfg.learning_rate
                for name, g in grads.items():
                    model.params[name] -= lr * g
                ntok = x.shape[0] * x.shape[1]
                nll_sum += total * ntok
                n_targets += ntok

            train_loss = nll_sum / max(n_targets, 1)
            reg_value = k_now = None
            if sets is not None:
                reg_value, k_now = _reg_diagnostics(model, sets, rows, cfg)
            val_ppl = None
            if valid is not None:
                val_ppl = perplexity(model, valid, batch_size=eval_batch_size)
            rec = EpochRecord(epoch=epoch, train_loss=float(train_loss),
                              val_ppl=val_ppl, reg_value=reg_value, k=k_now)
            report.epochs.append(rec)
            if log_fh is not None:
                json.dump({"epoch": rec.epoch, "train_loss": rec.train_loss,
                           "val_ppl": rec.val_ppl, "reg_value": rec.reg_value,
                           "k": rec.k}, log_fh)
                log_fh.write("\n")
                log_fh.flush()
            log.info("epoch %d: loss %.4f val_ppl %s reg %s", epoch, train_loss,
                     f"{val_ppl:.3f}" if val_ppl is not None else "-",
                     f"{reg_value:.5f}" if reg_value is not None else "-")

            if cfg.early_stop_patience is not None and val_ppl is not None:
                if val_ppl < best_val:
                    best_val = val_ppl
                    best_params = model.copy_params()
                    stale = 0
                else:
                    stale += 1
                    if stale >= cfg.early_stop_patience:
                        log.info("early stop after epoch %d (patience %d)",
                                 epoch, cfg.early_stop_patience)
                        break
    finally:
        if log_fh is not None:
            log_fh.close()

    if best_params is not None:
        model.params = best_params
    if test is not None:
        report.final_test_ppl = perplexity(model, test, batch_size=eval_batch_size)
    report.wall_clock_sec = time.perf_counter() - t_start
    return model, report


def perplexity(model: LanguageModel, stream: TokenStream, batch_size: int = 1) -> float:
    """exp(mean token negative log-likelihood) under teacher forcing.

    With batch_size > 1 the stream is arranged into parallel columns and a
    few tail tokens may be dropped, exactly as in training.
    """
    ids = stream.ids
    if ids.size < 2:
        raise ConfigError("perplexity needs a stream of at least 2 tokens")
    b = max(1, min(batch_size, ids.size // 2))
    data = batchify(ids, b)
    nb = data.shape[0]
    state = model.zero_state(b)
    bptt = model.config.bptt_len
    nll_sum = 0.0
    n = 0
    for i in range(0, nb - 1, bptt):
        x = data[i : i + bptt]
        y = data[i + 1 : i + 1 + bptt]
        x = x[: y.shape[0]]
        if y.shape[0] == 0:
            break
        logits, state, _ = model.forward(x, state)
        logp = _log_softmax(logits)
        T, B = x.shape
        nll_sum -= float(logp[np.arange(T)[:, None], np.arange(B)[None, :], y].sum())
        n += T * B
    return float(np.exp(nll_sum / n))


@dataclass
class GenerationConfig:
    """Multinomial generation protocol (temperature is fixed at 1)."""

    num_seeds: int = 2000
    max_len: int = 500
    total_tokens_target: int | None = None
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_seeds < 1 or self.max_len < 1:
            raise ConfigError("generation counts must be >= 1")
        if self.temperature != 1.0:
            raise ConfigError("generation temperature is fixed at 1")


def _step_logits(model: LanguageModel, tokens: np.ndarray, state):
    """Single-timestep forward for a batch of current tokens."""
    p = model.params
    cfg = model.config
    x = p["emb_in"][tokens]
    new_state = []
    for l, n_h in enumerate(cfg.layer_sizes):
        wx, wh, b = p[f"wx{l}"], p[f"wh{l}"], p[f"b{l}"]
        h, c = state[l]
        z = x @ wx.T + h @ wh.T + b
        i = _sigmoid(z[:, :n_h])
        f = _sigmoid(z[:, n_h : 2 * n_h])
        g = np.tanh(z[:, 2 * n_h : 3 * n_h])
        o = _sigmoid(z[:, 3 * n_h :])
        c = f * c + i * g
        h = o * np.tanh(c)
        new_state.append((h, c))
        x = h
    logits = x @ model.output_embedding.T + p["b_out"]
    return logits, new_state


def generate(model: LanguageModel, vocab: Vocabulary | None, gen_config: GenerationConfig,
             lane_batch: int = 128) -> TokenStream:
    """Sample continuations from the trained model.

    Each seed index gets its own random stream: it draws a seed token from
    the training-corpus unigram distribution, then samples up to max_len
    tokens from the full softmax.  Continuations are concatenated in seed
    order with an end-of-sentence marker between them, stopping once
    total_tokens_target is reached.  Results do not depend on lane_batch.
    """
    vocab = vocab or model.vocab
    counts = vocab.counts.astype(np.float64)
    if counts.sum() <= 0:
        raise ConfigError("vocabulary has no counts to sample seed words from")
    cum_uni = np.cumsum(counts / counts.sum())
    V = len(vocab)

    continuations: list[list[int]] = []
    total = 0
    target = gen_config.total_tokens_target
    done = False
    for chunk_start in range(0, gen_config.num_seeds, lane_batch):
        if done:
            break
        lanes = range(chunk_start, min(chunk_start + lane_batch, gen_config.num_seeds))
        rngs = [np.random.default_rng([gen_config.seed, _GENERATE_STREAM, s]) for s in lanes]
        nb = len(rngs)
        cur = np.array(
            [min(int(np.searchsorted(cum_uni, r.random(), side="right")), V - 1) for r in rngs],
            dtype=np.int64,
        )
        seqs = [[int(t)] for t in cur]
        state = model.zero_state(nb)
        for _ in range(gen_config.max_len):
            logits, state = model.step(cur, state)
            probs = softmax(logits / gen_config.temperature)
            cum = np.cumsum(probs, axis=1)
            nxt = np.empty(nb, dtype=np.int64)
            for bi, r in enumerate(rngs):
                nxt[bi] = min(int(np.searchsorted(cum[bi], r.random(), side="right")), V - 1)
            for bi in range(nb):
                seqs[bi].append(int(nxt[bi]))
            cur = nxt
        for seq in seqs:
            continuations.append(seq)
            total += len(seq)
            if target is not None and total >= target:
                done = True
                break

    eos = vocab.eos_id
    out: list[int] = []
    for idx, seq in enumerate(continuations):
        if idx > 0:
            out.append(eos)
        out.extend(seq)
    return TokenStream(np.array(out, dtype=np.int32), vocab, "generated")


def write_generated_text(stream: TokenStream, path) -> None:
    """One continuation per line; sentence markers inside a continuation
    become line breaks too, which re-reading treats identically."""
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(stream.to_text(), encoding="utf-8")


def save_checkpoint(model: LanguageModel, path) -> None:
    """Versioned binary: magic, JSON config+vocab block, float32 LE tensors."""
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(
        {
            "config": model.config.to_dict(),
            "vocab": {
                "tokens": model.vocab.id_to_token,
                "counts": [int(c) for c in model.vocab.counts],
            },
        },
        sort_keys=True,
    ).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in model.param_names():
            fh.write(model.params[name].astype("<f4").tobytes())


def load_checkpoint(path) -> LanguageModel:
    from pathlib import Path

    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    (blob_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    meta = json.loads(raw[off : off + blob_len].decode("utf-8"))
    off += blob_len
    config = LMConfig.from_dict(meta["config"])
    vocab = Vocabulary(meta["vocab"]["tokens"], meta["vocab"]["counts"])
    model = init_model(config, vocab, seed=0)
    for name in model.param_names():
        shape = model.params[name].shape
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        off += count * 4
        model.params[name] = arr.astype(np.float64).reshape(shape)
    if off != len(raw):
        raise CheckpointError(f"{path} has {len(raw) - off} trailing bytes")
    return model
