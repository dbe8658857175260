"""Uniform segmenter interface over the built-in classical backend and
external pretrained models reached through a file exchange.

Every backend honors the same contract: a 3-channel image in, a label map
of identical height/width with sequential instance ids out. That alignment
guarantee is what lets masks computed on virtual H&E transfer back to the
original IHC image without registration.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import ConfigError, ContractViolationError
from ..imaging import relabel_sequential
from ..validation import check_rgb
from .classical import (ClassicalParams, otsu_threshold, segment_classical,
                        watershed_split)
from .exchange import (BACKEND_DIR_ENV, ExchangeContract,
                       exchange_segment_image, run_exchange)

__all__ = [
    "ClassicalParams", "ClassicalNucleiSegmenter", "ExchangeContract",
    "ExchangeSegmenter", "SegmenterDescriptor", "create_segmenter",
    "segment", "otsu_threshold", "watershed_split", "segment_classical",
    "run_exchange", "BACKEND_DIR_ENV", "STUB_BACKEND_COMMAND",
]

# Command template for the shipped stub backend (tests, dry runs).
STUB_BACKEND_COMMAND = (
    f"{sys.executable} -m stainshift.segmentation.stub_backend"
    " {input_dir} {output_dir}"
)


class ClassicalNucleiSegmenter(BaseEstimator):
    """Otsu + watershed nuclei segmenter with sklearn-style parameters."""

    def __init__(self, smoothing_sigma: float = 1.0, min_area: int = 15,
                 footprint: int = 7, invert: bool = True):
        self.smoothing_sigma = smoothing_sigma
        self.min_area = min_area
        self.footprint = footprint
        self.invert = invert

    def fit(self, X=None, y=None):
        """No training required; present for pipeline compatibility."""
        return self

    def predict(self, image) -> np.ndarray:
        params = ClassicalParams(
            smoothing_sigma=self.smoothing_sigma,
            min_area=self.min_area,
            footprint=self.footprint,
            invert=self.invert,
        )
        return segment_classical(image, params)


class ExchangeSegmenter(BaseEstimator):
    """Wrapper running an external model through the file-exchange contract."""

    def __init__(self, command: str = STUB_BACKEND_COMMAND,
                 timeout: float = 600.0):
        self.command = command
        self.timeout = timeout

    def fit(self, X=None, y=None):
        return self

    def contract(self) -> ExchangeContract:
        return ExchangeContract(command=self.command, timeout=self.timeout)

    def predict(self, image) -> np.ndarray:
        return exchange_segment_image(self.contract(), image)


BACKENDS = {
    "classical": ClassicalNucleiSegmenter,
    "exchange": ExchangeSegmenter,
}


@dataclass(frozen=True)
class SegmenterDescriptor:
    """Which backend to run, under what name/version, with what parameters."""

    backend: str
    name: str = ""
    version: str = ""
    params: dict = field(default_factory=dict)


def create_segmenter(descriptor: SegmenterDescriptor):
    cls = BACKENDS.get(descriptor.backend)
    if cls is None:
        raise ConfigError(
            f"unknown segmentation backend {descriptor.backend!r}; "
            f"registered backends: {sorted(BACKENDS)}"
        )
    try:
        return cls(**descriptor.params)
    except TypeError as exc:
        raise ConfigError(
            f"bad parameters for backend {descriptor.backend!r}: {exc}"
        ) from exc


def segment(descriptor: SegmenterDescriptor, image) -> np.ndarray:
    """Run the described backend and enforce the shared output contract."""
    rgb = check_rgb(image)
    segmenter = create_segmenter(descriptor)
    labels = segmenter.predict(rgb)
    if labels.shape != rgb.shape[:2]:
        raise ContractViolationError(
            f"backend {descriptor.backend!r} returned shape {labels.shape} "
            f"for a {rgb.shape[:2]} image"
        )
    return relabel_sequential(labels)
