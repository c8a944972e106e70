"""Desk-scale DP-SGD trainer with attribute-inference instrumentation."""

from .data import (Schema, SchemaError, TabularDataset, encode_records, load_csv, load_schema,
                   schema_from_mapping)
from .dpsgd import (
    DATA_DEPENDENCE_CAVEAT,
    AnalysisMode,
    EpochRecord,
    SensitivityTrace,
    TrainConfig,
    TrainReport,
    clip,
    dp_sgd_step,
    r_t_approx,
    r_t_full,
    train,
)
from .models import Architecture, ModelSpec, ModelState, per_example_gradient, per_example_gradients
from .synthetic import adult_like, purchase_like, write_synthetic

__all__ = [
    "AnalysisMode", "Architecture", "DATA_DEPENDENCE_CAVEAT", "EpochRecord", "ModelSpec",
    "ModelState", "Schema", "SchemaError", "SensitivityTrace", "TabularDataset",
    "TrainConfig", "TrainReport", "adult_like", "clip", "dp_sgd_step", "encode_records",
    "load_csv", "load_schema", "per_example_gradient", "per_example_gradients",
    "purchase_like", "r_t_approx", "r_t_full", "schema_from_mapping", "train",
    "write_synthetic",
]
