"""Unpaired image-to-image translation engine."""

from .checkpoint import TranslationCheckpoint
from .engine import (CycleGanTranslator, LossReport, TranslationConfig,
                     train, translate_tiled)
from .losses import adversarial_loss, cycle_loss
from .networks import (DOWNSAMPLE_FACTOR, build_discriminator,
                       build_generator, check_generator_input)

__all__ = [
    "CycleGanTranslator", "LossReport", "TranslationConfig",
    "TranslationCheckpoint", "train", "translate_tiled",
    "adversarial_loss", "cycle_loss",
    "build_generator", "build_discriminator", "check_generator_input",
    "DOWNSAMPLE_FACTOR",
]


def translate(checkpoint, image):
    """Translate one image with a checkpoint object or archive path."""
    translator = CycleGanTranslator.from_checkpoint(checkpoint)
    return translator.translate(image)
