"""Interpretable additive risk modelling toolkit.

Building blocks:

* :mod:`lamkit.data` -- dataset/config ingestion and stratified CV splits
* :mod:`lamkit.binning` -- supervised discretisation and monotone encodings
* :mod:`lamkit.glm` -- sign-constrained logistic regression
* :mod:`lamkit.lam` -- clipped-linear link, its optimal slope, attributions
* :mod:`lamkit.ensemble` -- scorecards, two-layer stacks, opinion-pool mixtures
* :mod:`lamkit.metrics` -- AUC and calibration summaries
* :mod:`lamkit.stats` -- exact nonparametric classifier comparison
* :mod:`lamkit.cli` -- the ``lamkit`` command-line harness
"""

from .binning import BinMode, BinningTransform, fit_edges, fit_transform
from .data import (
    Dataset,
    DatasetConfig,
    FeatureSpec,
    FoldPlan,
    Monotone,
    SubscaleSpec,
    dataset_to_csv,
    load_config,
    load_csv,
    stratified_kfold,
)
from .ensemble import (
    Arm1Model,
    FixedScores,
    MixtureModel,
    RawLinearModel,
    TwoLayerModel,
    attribute_subscales,
    hedge_weights,
    predict_mixture,
    subscale_hedge,
    train_arm1,
    train_arm2,
    train_mixture,
    train_raw_nnlr,
)
from .errors import DataValidationError, LamkitError, NumericalError
from .glm import AdditiveModel, Link, kkt_residual, train_nnlr
from .lam import (
    ALPHA_STAR,
    ApproximationReport,
    attribute_lam,
    dilog,
    find_alpha_star,
    linearise,
    predict_lam,
    sigmoid,
    sigmoid_approx,
    squared_error,
)
from .metrics import (
    CalibrationTable,
    auc,
    calibration_table,
    certainty_fraction,
    ece,
    mce,
)
from .persistence import load_model, save_model
from .stats import (
    ComparisonResult,
    ScoreMatrix,
    WilcoxonResult,
    cd_graph,
    compare_classifiers,
    friedman,
    hodges_lehmann,
    holm,
    iman_davenport,
    rank_matrix,
    wilcoxon_critical_value,
    wilcoxon_exact,
)

__version__ = "0.1.0"
