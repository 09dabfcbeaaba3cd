"""Battery state-of-health toolkit: per-cycle feature extraction,
correlation- and Shapley-based feature selection, and a decomposition-
linear forecaster, with an experiment harness and CLI on top."""

__version__ = "0.1.0"

from .errors import ParseError, ValidationError
from .ingest import (
    CellDataset,
    CycleRecord,
    SohSeries,
    compute_soh,
    eol_cycle,
    load_cell_csv,
    save_cell_csv,
)
from .features import (
    FEATURE_IDS,
    FeatureTable,
    FeatureVector,
    cc_cv_split,
    extract_cycle_features,
    extract_feature_table,
    load_feature_csv,
    save_feature_csv,
    skewness,
    slope_between,
)
from .select import (
    LinearSurrogate,
    SelectionReport,
    fit_linear_surrogate,
    global_shap_ranking,
    pearson_correlation,
    rank_by_pcc,
    shapley_exact_linear,
    shapley_permutation_mc,
)
from .dlinear import (
    Decomposition,
    DLinearModel,
    SupervisedWindows,
    build_supervised,
    decompose,
    fit,
    forecast_series,
)
from .evalharness import (
    ExperimentConfig,
    ExperimentReport,
    cross_cell_transfer,
    emit_plot_data,
    ranking_agreement,
    rmse,
    run_experiment,
    training_cycle_sweep,
)
