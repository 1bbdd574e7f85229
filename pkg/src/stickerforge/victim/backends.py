"""Classifier backends behind one predict() interface.

A backend exposes ``predict(PixelImage) -> ClassifierVerdict`` plus an
``input_size`` (None for black boxes that accept any resolution). Specs are
picklable recipes so worker processes can build their own instances.
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import imaging
from .cnn import ClassifierVerdict, forward
from .external import DEFAULT_TIMEOUT, ExternalClassifier, ExternalSpec
from .weights import WeightBundle, load_weights


class BuiltinClassifier:
    """In-process CNN backend; read-only over its weights, fork-safe."""

    def __init__(self, bundle: WeightBundle):
        self.bundle = bundle

    @property
    def input_size(self) -> int:
        return self.bundle.architecture.input_size

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.bundle.class_names

    def predict(self, img: imaging.PixelImage) -> ClassifierVerdict:
        size = self.input_size
        if img.width != size or img.height != size:
            img = imaging.resize_image(img, size, size)
        return forward(self.bundle, img)


@dataclass(frozen=True)
class BuiltinSpec:
    path: str

    def create(self) -> BuiltinClassifier:
        return BuiltinClassifier(load_weights(self.path))


def parse_backend_spec(text: str):
    """Parse ``builtin:<weights>`` or ``external:<cmd>`` into a spec."""
    kind, sep, rest = text.partition(":")
    if not sep or not rest:
        raise ValueError(f"backend spec must be builtin:<weights> or external:<cmd>, got {text!r}")
    if kind == "builtin":
        return BuiltinSpec(path=rest)
    if kind == "external":
        return ExternalSpec(cmd=rest, timeout=DEFAULT_TIMEOUT)
    raise ValueError(f"unknown backend kind {kind!r}")


def materialize(classifier_or_spec):
    """Return a live classifier: call .create() on specs, pass through instances."""
    if hasattr(classifier_or_spec, "create"):
        return classifier_or_spec.create()
    return classifier_or_spec


__all__ = [
    "BuiltinClassifier",
    "BuiltinSpec",
    "ExternalClassifier",
    "ExternalSpec",
    "materialize",
    "parse_backend_spec",
]
