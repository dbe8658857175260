"""stainshift: label-free nuclei segmentation for IHC images.

The pipeline trains an unpaired IHC -> H&E image translator, applies H&E
nuclei segmenters to the virtual H&E output (masks transfer back to the IHC
pixels unchanged), scores results with pixel- and instance-level metrics,
and detects positively stained cells by HSI thresholding.
"""

__version__ = "0.1.0"

from .errors import (BackendError, CheckpointError, ConfigError,
                     ContractViolationError, DataError, StainShiftError,
                     TrainingDivergedError)
from .evaluation import (CurvePoint, DatasetReport, InstanceMetrics,
                         MatchResult, accuracy_curve, dice, evaluate_dataset,
                         instance_metrics, iou, match_instances,
                         render_overlay)
from .imaging import (PatchSpec, TilePlan, extract_patch, plan_tiles,
                      read_image, read_label_map, relabel_sequential,
                      rgb_to_hsi, sample_patches, stitch_tiles, write_image,
                      write_label_map)
from .positivity import (Detection, PositivityThresholds, centroids,
                         classify_positive, detect_positive_cells,
                         positivity_report, write_submission)
from .segmentation import (ClassicalNucleiSegmenter, ClassicalParams,
                           ExchangeContract, ExchangeSegmenter,
                           SegmenterDescriptor, create_segmenter,
                           otsu_threshold, segment, segment_classical,
                           watershed_split)
from .translation import (CycleGanTranslator, LossReport,
                          TranslationCheckpoint, TranslationConfig,
                          adversarial_loss, cycle_loss, translate_tiled)

__all__ = [
    "__version__",
    # errors
    "StainShiftError", "ConfigError", "DataError", "BackendError",
    "ContractViolationError", "TrainingDivergedError", "CheckpointError",
    # imaging
    "PatchSpec", "TilePlan", "rgb_to_hsi", "sample_patches", "extract_patch",
    "plan_tiles", "stitch_tiles", "relabel_sequential", "read_image",
    "write_image", "read_label_map", "write_label_map",
    # translation
    "CycleGanTranslator", "TranslationConfig", "TranslationCheckpoint",
    "LossReport", "cycle_loss", "adversarial_loss", "translate_tiled",
    # segmentation
    "ClassicalNucleiSegmenter", "ClassicalParams", "ExchangeContract",
    "ExchangeSegmenter", "SegmenterDescriptor", "create_segmenter",
    "segment", "otsu_threshold", "watershed_split", "segment_classical",
    # evaluation
    "MatchResult", "InstanceMetrics", "CurvePoint", "DatasetReport",
    "iou", "dice", "match_instances", "instance_metrics", "accuracy_curve",
    "render_overlay", "evaluate_dataset",
    # positivity
    "PositivityThresholds", "Detection", "classify_positive", "centroids",
    "detect_positive_cells", "positivity_report", "write_submission",
]
