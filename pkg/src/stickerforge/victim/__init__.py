"""Classifier backends: built-in small CNN, weight files, external protocol."""

from .backends import (
    BuiltinClassifier,
    BuiltinSpec,
    materialize,
    parse_backend_spec,
)
from .cnn import (
    ClassifierVerdict,
    CnnArchitecture,
    ConvSpec,
    TrainConfig,
    accuracy,
    default_architecture,
    forward,
    softmax,
    train,
    verdict_from_probs,
)
from .external import ExternalClassifier, ExternalSpec, serve_stdio
from .weights import WeightBundle, fnv1a64, load_weights, save_weights

__all__ = [
    "BuiltinClassifier",
    "BuiltinSpec",
    "ClassifierVerdict",
    "CnnArchitecture",
    "ConvSpec",
    "ExternalClassifier",
    "ExternalSpec",
    "TrainConfig",
    "WeightBundle",
    "accuracy",
    "default_architecture",
    "fnv1a64",
    "forward",
    "load_weights",
    "materialize",
    "parse_backend_spec",
    "save_weights",
    "serve_stdio",
    "softmax",
    "train",
    "verdict_from_probs",
]
