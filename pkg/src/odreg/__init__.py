"""Online regularized distributional regression and forecast evaluation."""

from .estimator import (
    EstimatorConfig,
    EstimatorState,
    WorkingPoint,
    fit_batch,
    predict,
    predict_matrix,
    predict_quantiles,
    state_from_bytes,
    state_to_bytes,
    update,
    update_minibatch,
    working_point,
)
from .families import DistributionFamily, get_family
from .gram import (
    GramState,
    InverseGramState,
    effective_sample_size,
    gram_from_batch,
    init_gram,
    init_inverse_gram,
    update_gram,
    update_gram_block,
    update_inverse_gram,
)
from .ocd import (
    CoefficientPath,
    LambdaGrid,
    compute_lambda_grid,
    coordinate_update,
    fit_path,
    soft_threshold,
)
from .scaler import ScalerState, init_scaler, partial_fit, transform
from .scoring import (
    ForecastRecord,
    ScoreTable,
    build_score_table,
    crps_pinball,
    dm_matrix,
    dm_test,
    interval_scores,
    log_score,
    point_scores,
)
from .selection import (
    AIC,
    BIC,
    HQC,
    ICSpec,
    RssTracker,
    information_criterion,
    rss_to_loglik,
    select_lambda,
    update_rss,
)

__version__ = "0.1.0"
