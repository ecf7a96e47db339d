"""stabaudit: prediction-stability auditing for tabular classifiers.

Quantifies two notions of instability on a fixed test sample — churn across
data updates and ambiguity across sets of near-optimal competing models —
and checks the analytic bounds that relate them.
"""

from .data import (
    Dataset,
    RawTable,
    SchemaConfig,
    SplitSpec,
    UpdateRegime,
    featurize,
    load_csv,
    make_split,
    subsample_for_regime,
)
from .models import (
    Classifier,
    HeadConfig,
    TrainConfig,
    UAClassifier,
    auc,
    mean_field_predict,
    platt_calibrate,
    pointwise_uncertainty,
    train,
    train_ua,
)
from .metrics import (
    PredictionMatrix,
    SmoothChurnParams,
    UnstableSets,
    baseline_ambiguity,
    churn,
    churn_unstable_set,
    common_arbitrariness,
    discrepancy,
    empirical_ambiguity,
    probability_flip_bins,
    rashomon_unstable_set,
    signed_loss_churn,
    smooth_churn,
    uncertainty_threshold_curve,
)
from .rashomon import (
    CandidateGridConfig,
    RashomonConfig,
    RashomonSet,
    constrained_candidates,
    empirical_rashomon,
    fit_baseline,
    membership,
)
from .bounds import (
    BoundReport,
    StabilityParams,
    beta_estimate,
    check_bound,
    churn_sum_bound,
    expected_smooth_churn_bound,
    rashomon_churn_bound,
    zero_churn_diff_test,
)
from .config import ExperimentConfig, validate_config
from .pipeline import StabilityReport, emit_plot_data, run_experiment

__version__ = "0.1.0"
