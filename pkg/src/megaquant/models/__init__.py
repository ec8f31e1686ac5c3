"""Model assemblies and training for the two spectrum regressors."""
from .cnn import CnnConfig, build_cnn, cnn_shape_trace
from .dataset import ExportedData, export_labelled, generate_exported
from .training import (TrainedModel, cross_validate, predict_max_normalised,
                       quantifier_ramp, train)
from .yae import YaeConfig, YShapedAutoencoder, build_yae, yae_widths

__all__ = [
    "CnnConfig", "ExportedData", "TrainedModel", "YShapedAutoencoder",
    "YaeConfig", "build_cnn", "build_yae", "cnn_shape_trace", "cross_validate",
    "export_labelled", "generate_exported", "predict_max_normalised",
    "quantifier_ramp", "train", "yae_widths",
]
