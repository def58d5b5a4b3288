"""Day-ahead electricity price forecasting pipeline."""

from .data import MarketDataset, load_dataset
from .features import build_design, build_feature_row, feature_names, feature_width
from .study import (
    StudyConfig,
    StudySnapshot,
    run_study,
    snapshot_from_bytes,
    snapshot_to_bytes,
)
from .synthetic import dataset_to_csv, synthetic_market

__all__ = [
    "MarketDataset",
    "load_dataset",
    "build_design",
    "build_feature_row",
    "feature_names",
    "feature_width",
    "StudyConfig",
    "StudySnapshot",
    "run_study",
    "snapshot_from_bytes",
    "snapshot_to_bytes",
    "synthetic_market",
    "dataset_to_csv",
]
