"""biaslab: measure gender bias in text corpora and word-level LSTM language
models, and reduce it during training via a gender-subspace penalty."""

__version__ = "0.1.0"

from .biasmeter import (
    AmplificationFit,
    BiasScoreTable,
    BiasSummary,
    CooccurrenceTable,
    ExponentialContext,
    FixedContext,
    bias_scores,
    conditional_probability,
    count_cooccurrences,
    fit_amplification,
    summarize,
)
from .corpus import (
    DefiningSets,
    StopWordList,
    TokenStream,
    Vocabulary,
    build_vocab,
    load_defining_sets,
    load_stop_words,
    subsample,
    tokenize,
)
from .genderspace import (
    DifferenceMatrix,
    GenderSubspace,
    RegularizerConfig,
    build_difference_matrix,
    gender_subspace,
    hard_debias,
    jacobi_svd,
    regularizer_gradient,
    regularizer_value,
)
from .langmodel import (
    GenerationConfig,
    LanguageModel,
    LMConfig,
    TrainReport,
    generate,
    init_model,
    load_checkpoint,
    perplexity,
    save_checkpoint,
    train,
)

__all__ = [
    "AmplificationFit",
    "BiasScoreTable",
    "BiasSummary",
    "CooccurrenceTable",
    "DefiningSets",
    "DifferenceMatrix",
    "ExponentialContext",
    "FixedContext",
    "GenderSubspace",
    "GenerationConfig",
    "LMConfig",
    "LanguageModel",
    "RegularizerConfig",
    "StopWordList",
    "TokenStream",
    "TrainReport",
    "Vocabulary",
    "bias_scores",
    "build_difference_matrix",
    "build_vocab",
    "conditional_probability",
    "count_cooccurrences",
    "fit_amplification",
    "gender_subspace",
    "generate",
    "hard_debias",
    "init_model",
    "jacobi_svd",
    "load_checkpoint",
    "load_defining_sets",
    "load_stop_words",
    "perplexity",
    "regularizer_gradient",
    "regularizer_value",
    "save_checkpoint",
    "subsample",
    "summarize",
    "tokenize",
    "train",
]
