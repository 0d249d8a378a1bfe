"""Nation attribution and malware-family classification for sandbox reports.

Pipeline: tokenize reports into binary bag-of-words vectors, train dense
networks from scratch, transfer a trained trunk between tasks, rank features
by connection weights, and map penultimate activations to 2D with t-SNE.
A synthetic corpus generator provides labeled data at desk scale.
"""

from .corpus import (
    Corpus,
    CorpusError,
    LabeledReport,
    SplitResult,
    SynthSpec,
    export_corpus,
    family_disjoint_split,
    generate_synthetic_corpus,
    load_corpus,
)
from .featurize import (
    DEFAULT_VOCAB_SIZE,
    FormatError,
    Vocabulary,
    build_vocabulary,
    encode_labels,
    load_matrix,
    load_vocabulary,
    save_matrix,
    save_vocabulary,
    tokenize,
    vectorize,
    vectorize_corpus,
)
from .interpret import (
    Embedding2D,
    ImportanceRanking,
    TsneConfig,
    embed_corpus,
    export_embedding_csv,
    export_importance_csv,
    export_scatter_svg,
    importance_csv,
    joint_affinities,
    olden_importance,
    tsne_embed,
)
from .network import (
    ArchSpec,
    EvalResult,
    MlpModel,
    NumericalError,
    TrainConfig,
    TrainReport,
    default_attribution_arch,
    default_family_arch,
    evaluate,
    forward,
    gradient_check,
    init_model,
    learning_rate,
    load_model,
    penultimate_activations,
    save_model,
    train,
    train_step,
)
from .transfer import freeze_trunk, replace_head, transfer_train

__version__ = "0.1.0"

__all__ = [
    "ArchSpec",
    "Corpus",
    "CorpusError",
    "DEFAULT_VOCAB_SIZE",
    "Embedding2D",
    "EvalResult",
    "FormatError",
    "ImportanceRanking",
    "LabeledReport",
    "MlpModel",
    "NumericalError",
    "SplitResult",
    "SynthSpec",
    "TrainConfig",
    "TrainReport",
    "TsneConfig",
    "Vocabulary",
    "build_vocabulary",
    "default_attribution_arch",
    "default_family_arch",
    "embed_corpus",
    "encode_labels",
    "evaluate",
    "export_corpus",
    "export_embedding_csv",
    "export_importance_csv",
    "export_scatter_svg",
    "family_disjoint_split",
    "forward",
    "freeze_trunk",
    "generate_synthetic_corpus",
    "gradient_check",
    "importance_csv",
    "init_model",
    "joint_affinities",
    "learning_rate",
    "load_corpus",
    "load_matrix",
    "load_model",
    "load_vocabulary",
    "olden_importance",
    "penultimate_activations",
    "replace_head",
    "save_matrix",
    "save_model",
    "save_vocabulary",
    "tokenize",
    "train",
    "train_step",
    "transfer_train",
    "tsne_embed",
    "vectorize",
    "vectorize_corpus",
]
