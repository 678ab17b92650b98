"""Experiment orchestration: analyze, train, generate, evaluate, report.

Every command is a pure function of its config file, flags, and seed; all
randomness flows from the global seed through named substreams so the
stages can be re-run independently.  Outputs under the configured out_dir:

    scores_train_<scheme>.csv / summary_train_<scheme>.json   (analyze)
    checkpoints/model_lambda<l>_seed<s>.ckpt                   (train)
    logs/train_lambda<l>_seed<s>.jsonl  (+ .meta.json timing)  (train)
    generated/gen_lambda<l>_seed<s>.txt                        (generate)
    scores_gen_lambda<l>_<scheme>.csv, summary_gen_...json     (evaluate)
    report.json, report.csv                                    (evaluate)

Timing sidecars (.meta.json) are the only outputs that vary between
identical runs; everything else is byte-reproducible.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import biasmeter, corpus, langmodel
from .errors import ConfigError
from .genderspace import RegularizerConfig

log = logging.getLogger(__name__)

# substream offsets from the global seed
_CORPUS_STREAM = 101
_INIT_STREAM = 202

DEFAULT_LAMBDAS = [0.0, 0.001, 0.01, 0.1, 0.5, 0.8, 1.0]


@dataclasses.dataclass
class ExperimentConfig:
    corpus_name: str
    train_path: Path
    valid_path: Path | None
    test_path: Path | None
    tokenize_scheme: str
    subsample_factor: int
    defining_sets_path: Path
    stop_words_path: Path
    schemes: dict
    lambdas: list[float]
    model: langmodel.LMConfig
    generation: langmodel.GenerationConfig
    out_dir: Path
    seed: int

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        if path.suffix.lower() == ".toml":
            try:
                import tomllib as toml
            except ImportError:
                import tomli as toml
            data = toml.loads(raw.decode("utf-8"))
        else:
            try:
                data = json.loads(raw.decode("utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        base = Path(base_dir)

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        try:
            corpus_section = data["corpus"]
            train_path = resolve(corpus_section["train"])
        except KeyError as exc:
            raise ConfigError(f"config is missing required key: {exc}") from None

        name = corpus_section.get("name", train_path.stem)
        scheme_name = corpus_section.get("tokenize", "ptb")
        valid = corpus_section.get("valid")
        test = corpus_section.get("test")

        ds_path = data.get("defining_sets")
        if ds_path is None:
            ds_path = corpus.default_defining_sets_path(name)
        else:
            ds_path = resolve(ds_path)
        sw_path = data.get("stop_words")
        sw_path = corpus.default_stop_words_path() if sw_path is None else resolve(sw_path)

        scheme_cfg = data.get("schemes", {"fixed": {}, "infinite": {}})
        schemes = {}
        for label, params in scheme_cfg.items():
            sch = biasmeter.make_scheme(label, **params)
            schemes[sch.label] = sch
        if not schemes:
            raise ConfigError("config must list at least one context scheme")

        lambdas = [float(x) for x in data.get("lambdas", DEFAULT_LAMBDAS)]
        if not lambdas or any(x < 0 for x in lambdas):
            raise ConfigError("lambda sweep must be non-empty and non-negative")

        seed = int(data.get("seed", 0))
        model_cfg = langmodel.LMConfig.from_dict({"seed": seed, **data.get("model", {})})
        gen_cfg = langmodel.GenerationConfig(**{"seed": seed, **data.get("generation", {})})

        return cls(
            corpus_name=name,
            train_path=train_path,
            valid_path=resolve(valid) if valid else None,
            test_path=resolve(test) if test else None,
            tokenize_scheme=scheme_name,
            subsample_factor=int(corpus_section.get("subsample_factor", 1)),
            defining_sets_path=ds_path,
            stop_words_path=sw_path,
            schemes=schemes,
            lambdas=lambdas,
            model=model_cfg,
            generation=gen_cfg,
            out_dir=resolve(data.get("out_dir", "runs")),
            seed=seed,
        )

    # ---- derived inputs ----

    def load_inputs(self):
        """Tokenize the corpus, build the vocabulary, load the word lists."""
        for label, p in (("train corpus", self.train_path),
                         ("defining sets", self.defining_sets_path),
                         ("stop words", self.stop_words_path)):
            if not Path(p).is_file():
                raise ConfigError(f"{label} file not found: {p}")
        tokens = corpus.tokenize(Path(self.train_path).read_bytes(), self.tokenize_scheme)
        vocab = corpus.build_vocab(tokens)
        train = corpus.TokenStream.from_tokens(tokens, vocab, self.corpus_name)
        if self.subsample_factor > 1:
            train = corpus.subsample(train, self.subsample_factor,
                                     [self.seed, _CORPUS_STREAM])
        sets = corpus.load_defining_sets(self.defining_sets_path, vocab)
        stops = corpus.load_stop_words(self.stop_words_path, sets)
        valid = test = None
        if self.valid_path is not None:
            valid = corpus.TokenStream.from_file(self.valid_path, vocab,
                                                 self.tokenize_scheme, "valid")
        if self.test_path is not None:
            test = corpus.TokenStream.from_file(self.test_path, vocab,
                                                self.tokenize_scheme, "test")
        return train, valid, test, vocab, sets, stops

    # ---- file layout ----

    def checkpoint_path(self, lam: float) -> Path:
        return self.out_dir / "checkpoints" / f"model_lambda{lam:g}_seed{self.seed}.ckpt"

    def log_path(self, lam: float) -> Path:
        return self.out_dir / "logs" / f"train_lambda{lam:g}_seed{self.seed}.jsonl"

    def generated_path(self, lam: float) -> Path:
        return self.out_dir / "generated" / f"gen_lambda{lam:g}_seed{self.seed}.txt"

    def report_path(self) -> Path:
        return self.out_dir / "report.json"


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _score_stream(stream, sets, stops, schemes):
    """(scheme label -> (cooc table, score table)) for one stream."""
    out = {}
    for label, scheme in schemes.items():
        table = biasmeter.count_cooccurrences(stream, sets, stops, scheme)
        out[label] = (table, biasmeter.bias_scores(table))
    return out


def cmd_analyze(config: ExperimentConfig, scheme_filter: str | None = None) -> int:
    """Score the training corpus and write per-word CSVs plus summaries."""
    train, _, _, _, sets, stops = config.load_inputs()
    schemes = _filter_schemes(config.schemes, scheme_filter)
    for label, scheme in schemes.items():
        table = biasmeter.count_cooccurrences(train, sets, stops, scheme)
        scores = biasmeter.bias_scores(table)
        summary = biasmeter.summarize(scores)
        biasmeter.write_scores_csv(scores, table,
                                   config.out_dir / f"scores_train_{label}.csv")
        biasmeter.write_summary_json(summary, scheme,
                                     config.out_dir / f"summary_train_{label}.json")
        log.info("%s/%s: mu=%.4f sigma=%.4f n=%d", config.corpus_name, label,
                 summary.mu, summary.sigma, summary.n)
    return 0


def _filter_schemes(schemes: dict, scheme_filter: str | None) -> dict:
    if scheme_filter in (None, "both"):
        return schemes
    alias = {"exponential": "infinite"}.get(scheme_filter, scheme_filter)
    if alias not in schemes:
        raise ConfigError(f"scheme {scheme_filter!r} is not configured")
    return {alias: schemes[alias]}


def cmd_train(config: ExperimentConfig, lam: float | None = None) -> int:
    """Train one model per lambda (or only ``lam``), writing checkpoints and logs."""
    train_stream, valid, test, vocab, sets, _ = config.load_inputs()
    lambdas = config.lambdas if lam is None else [lam]
    for value in lambdas:
        cfg = dataclasses.replace(
            config.model,
            seed=config.seed,
            reg=dataclasses.replace(config.model.reg, lam=value),
        )
        model = langmodel.init_model(cfg, vocab, seed=[config.seed, _INIT_STREAM])
        log_path = config.log_path(value)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log.info("training lambda=%g seed=%d", value, config.seed)
        model, report = langmodel.train(model, train_stream, sets, cfg,
                                        valid=valid, test=test, log_path=log_path)
        langmodel.save_checkpoint(model, config.checkpoint_path(value))
        _write_json(log_path.with_suffix(".meta.json"),
                    {"wall_clock_sec": report.wall_clock_sec,
                     "final_test_ppl": report.final_test_ppl})
        if report.final_test_ppl is not None:
            with log_path.open("a", encoding="utf-8") as fh:
                json.dump({"final_test_ppl": report.final_test_ppl}, fh)
                fh.write("\n")
    return 0


def cmd_generate(config: ExperimentConfig, lam: float | None = None) -> int:
    """Sample generated text from existing checkpoints."""
    lambdas = config.lambdas if lam is None else [lam]
    _require_checkpoints(config, lambdas)
    for value in lambdas:
        model = langmodel.load_checkpoint(config.checkpoint_path(value))
        stream = langmodel.generate(model, model.vocab, config.generation)
        langmodel.write_generated_text(stream, config.generated_path(value))
        log.info("generated %d tokens for lambda=%g", len(stream), value)
    return 0


def _require_checkpoints(config: ExperimentConfig, lambdas) -> None:
    missing = [f"{v:g}" for v in lambdas if not config.checkpoint_path(v).is_file()]
    if missing:
        raise ConfigError(
            "missing checkpoints for lambda values: " + ", ".join(missing)
            + " (run `biaslab train` first)"
        )


def _read_ppl_from_log(log_path: Path) -> float | None:
    if not log_path.is_file():
        return None
    ppl = None
    with log_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "final_test_ppl" in rec and rec["final_test_ppl"] is not None:
                ppl = rec["final_test_ppl"]
            elif rec.get("val_ppl") is not None:
                ppl = rec["val_ppl"]
    return ppl


def cmd_evaluate(config: ExperimentConfig) -> int:
    """Score generated text for every lambda and assemble the report.

    Existing generated-text files are reused; missing ones are produced
    from their checkpoints first, so the command consumes only files.
    """
    train_stream, _, _, vocab, sets, stops = config.load_inputs()
    _require_missing_generation(config)

    train_tables = _score_stream(train_stream, sets, stops, config.schemes)
    train_summary = {}
    for label, scheme in config.schemes.items():
        _, scores = train_tables[label]
        train_summary[label] = biasmeter.summary_dict(biasmeter.summarize(scores), scheme)

    rows = []
    for lam in config.lambdas:
        gen_stream = corpus.TokenStream.from_file(
            config.generated_path(lam), vocab, "cased", f"generated_lambda{lam:g}"
        )
        row = {"lambda": lam}
        for label, scheme in config.schemes.items():
            table = biasmeter.count_cooccurrences(gen_stream, sets, stops, scheme)
            scores = biasmeter.bias_scores(table)
            summary = biasmeter.summarize(scores)
            fit = biasmeter.fit_amplification(train_tables[label][1], scores)
            biasmeter.write_scores_csv(
                scores, table, config.out_dir / f"scores_gen_lambda{lam:g}_{label}.csv"
            )
            biasmeter.write_summary_json(
                summary, scheme,
                config.out_dir / f"summary_gen_lambda{lam:g}_{label}.json", fit
            )
            row[label] = {"mu": summary.mu, "sigma": summary.sigma, "beta": fit.beta}
        row["ppl"] = _read_ppl_from_log(config.log_path(lam))
        rows.append(row)

    report = {
        "corpus": config.corpus_name,
        "seed": config.seed,
        "schemes": {label: s.params() for label, s in config.schemes.items()},
        "train": train_summary,
        "rows": rows,
    }
    _write_json(config.report_path(), report)
    _write_report_csv(config, report)
    return 0


def _require_missing_generation(config: ExperimentConfig) -> None:
    to_generate = [v for v in config.lambdas if not config.generated_path(v).is_file()]
    if to_generate:
        _require_checkpoints(config, to_generate)
        for value in to_generate:
            model = langmodel.load_checkpoint(config.checkpoint_path(value))
            stream = langmodel.generate(model, model.vocab, config.generation)
            langmodel.write_generated_text(stream, config.generated_path(value))


def _write_report_csv(config: ExperimentConfig, report: dict) -> None:
    labels = list(report["schemes"])
    path = config.out_dir / "report.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["lambda"]
        for label in labels:
            header += [f"{label}_mu", f"{label}_sigma", f"{label}_beta"]
        header.append("ppl")
        writer.writerow(header)
        train_row = ["train"]
        for label in labels:
            t = report["train"][label]
            train_row += [repr(t["mu"]), repr(t["sigma"]), ""]
        train_row.append("")
        writer.writerow(train_row)
        for row in report["rows"]:
            out = [f"{row['lambda']:g}"]
            for label in labels:
                cell = row[label]
                out += [repr(cell["mu"]), repr(cell["sigma"]), repr(cell["beta"])]
            out.append("" if row["ppl"] is None else repr(row["ppl"]))
            writer.writerow(out)


def cmd_report(config: ExperimentConfig, stream=None) -> int:
    """Render an existing report.json as an aligned text table."""
    stream = stream or sys.stdout
    path = config.report_path()
    if not path.is_file():
        raise ConfigError(f"no report at {path}; run `biaslab evaluate` first")
    report = json.loads(path.read_text(encoding="utf-8"))
    labels = list(report["schemes"])
    header = ["lambda"] + [f"{l}:{m}" for l in labels for m in ("mu", "sigma", "beta")] + ["ppl"]
    lines = [header]
    train_cells = ["train"]
    for l in labels:
        t = report["train"][l]
        train_cells += [f"{t['mu']:.2f}", f"{t['sigma']:.2f}", ""]
    train_cells.append("")
    lines.append(train_cells)
    for row in report["rows"]:
        cells = [f"{row['lambda']:g}"]
        for l in labels:
            c = row[l]
            cells += [f"{c['mu']:.2f}", f"{c['sigma']:.2f}", f"{c['beta']:.2f}"]
        cells.append("" if row["ppl"] is None else f"{row['ppl']:.2f}")
        lines.append(cells)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    for r in lines:
        stream.write("  ".join(c.rjust(w) for c, w in zip(r, widths)) + "\n")
    return 0


def report_schema_path() -> Path:
    return Path(__file__).parent / "data" / "report.schema.json"
