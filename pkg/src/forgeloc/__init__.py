"""Temporal forgery localization toolkit.

Boundary-map ground truth and decoding, training losses with analytic
gradients, a desk-scale differentiable model with multimodal fusion,
Soft-NMS post-processing, AP/AR/AUC evaluation, and a sentiment-driven
transcript manipulation planner.
"""

from .boundary import BoundaryMap, extract_proposals, gt_boundary_map, modality_gt_map
from .evaluation import EvalReport, average_precision, average_recall, auc, evaluate
from .fusion import FusionWeights, fuse, produce_weights
from .losses import (
    LossReport,
    LossWeights,
    boundary_loss,
    contrastive_loss,
    frame_classification_loss,
    modality_boundary_loss,
    total_loss,
)
from .planner import (
    AntonymDictionary,
    ManipulationPlan,
    SentimentLexicon,
    Transcript,
    TranscriptToken,
    best_replacement,
    emit_variants,
    plan,
    sentiment,
)
from .postprocess import SnmsConfig, decode, soft_nms
from .types import (
    FeatureSequence,
    FrameLabelSequence,
    Segment,
    VideoAnnotation,
    VideoMeta,
    frame_labels,
    iou_1d,
    modality_labels,
    read_manifest,
    write_manifest,
)

__version__ = "0.1.0"
