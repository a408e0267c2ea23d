"""Settlement mapping on multispectral rasters with canonical correlation forests."""

__version__ = "0.1.0"

from .errors import DataError
from .cca import (
    CcaResult,
    ColumnStats,
    cca,
    column_stats,
    cross_covariance,
    project,
    standardize,
)
from .pipeline import (
    SampleSet,
    SplitSpec,
    assemble_region_dataset,
    balance_classes,
    extract_samples,
    fit_scaler,
    read_sample_csv,
    stratified_split,
    write_sample_csv,
)
from .forest import (
    CcfModel,
    FlatTree,
    Internal,
    Leaf,
    TrainConfig,
    best_split,
    default_feature_subsample,
    grow_node,
    predict_class,
    predict_class_batch,
    predict_proba,
    predict_proba_batch,
    predict_raster,
    train_forest,
)
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    confusion,
    evaluate,
    mean_iou,
    pixel_accuracy,
)
from .raster_io import (
    MultispectralRaster,
    SyntheticSceneSpec,
    bayes_accuracy_estimate,
    generate_scene,
    load_model,
    read_mask,
    read_raster,
    read_report,
    save_model,
    write_mask,
    write_raster,
    write_report,
)

__all__ = [
    "DataError",
    "CcaResult",
    "ColumnStats",
    "cca",
    "column_stats",
    "cross_covariance",
    "project",
    "standardize",
    "SampleSet",
    "SplitSpec",
    "assemble_region_dataset",
    "balance_classes",
    "extract_samples",
    "fit_scaler",
    "read_sample_csv",
    "stratified_split",
    "write_sample_csv",
    "CcfModel",
    "FlatTree",
    "Internal",
    "Leaf",
    "TrainConfig",
    "best_split",
    "default_feature_subsample",
    "grow_node",
    "predict_class",
    "predict_class_batch",
    "predict_proba",
    "predict_proba_batch",
    "predict_raster",
    "train_forest",
    "ConfusionMatrix",
    "EvalReport",
    "confusion",
    "evaluate",
    "mean_iou",
    "pixel_accuracy",
    "MultispectralRaster",
    "SyntheticSceneSpec",
    "bayes_accuracy_estimate",
    "generate_scene",
    "load_model",
    "read_mask",
    "read_raster",
    "read_report",
    "save_model",
    "write_mask",
    "write_raster",
    "write_report",
    "__version__",
]
