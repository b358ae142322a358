from .classification import (
    LabelColumn,
    auc,
    classification_metrics,
    max_f1_threshold,
    random_baseline,
    size_mse,
)
from .nlg import (
    TOKENIZER_VERSION,
    bleu,
    meteor,
    meteor_corpus,
    porter_stem,
    rouge_l,
    rouge_l_corpus,
    tokenize,
)
from .table import (
    NOT_COMPUTABLE,
    FeatureRow,
    MetricTable,
    feature_csv,
    mean_over_folds,
    nlg_csv,
    text_table,
)

__all__ = [
    "LabelColumn", "auc", "classification_metrics", "max_f1_threshold",
    "random_baseline", "size_mse", "TOKENIZER_VERSION", "bleu", "meteor",
    "meteor_corpus", "porter_stem", "rouge_l", "rouge_l_corpus", "tokenize",
    "NOT_COMPUTABLE", "FeatureRow", "MetricTable", "feature_csv",
    "mean_over_folds", "nlg_csv", "text_table",
]
