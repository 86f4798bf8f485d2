"""Ordinal regression as structured classification.

Labels in 1..K become cumulative binary codes of length K-1 and a
heterogeneous linear-chain CRF (no weight sharing across positions) is
trained on the encoded sequences.  The package also ships three linear
ordinal baselines, synthetic manifold generators, Nystroem RBF features
and the benchmarking statistics used to compare the models.
"""

from .baselines import (
    MultinomialLogisticModel,
    NestedBinaryModel,
    OrderedLogitModel,
    lr_fit,
    lr_fit_cv,
    lr_predict,
    lr_proba,
    nest_fit,
    nest_fit_cv,
    nest_predict,
    nest_proba,
    ol_fit,
    ol_fit_cv,
    ol_predict,
    ol_proba,
)
from .chain_crf import (
    ChainCrfParams,
    ChainMessages,
    InferenceMode,
    compute_potentials,
    edge_marginals,
    forward_backward,
    interval_query,
    label_distribution,
    node_marginals,
    viterbi,
)
from .data import (
    NystroemMap,
    OrdinalDataset,
    SplitSpec,
    Standardizer,
    equal_frequency_binning,
    load_csv,
    make_synthetic,
    nystroem_features,
    random_split,
    save_csv,
    standardize,
    stratified_folds,
)
from .encoding import (
    decode_label,
    encode_label,
    is_valid_code,
    nearest_valid_code,
    valid_codes,
)
from .evaluation import (
    CdResult,
    ScoreTable,
    WilcoxonResult,
    average_ranks,
    cd_groups,
    critical_difference,
    macro_mae,
    macro_zero_one,
    wilcoxon_signed_rank,
)
from .registry import MODEL_KINDS, TrainedPredictor, load_model, save_model
from .selection import DEFAULT_L2_GRID
from .storm import StormModel, TrainConfig, fit, fit_cv, nll, nll_gradient, predict, predict_proba

__version__ = "0.1.0"
