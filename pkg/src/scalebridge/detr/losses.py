"""Set-prediction matching cost and detection loss."""
from dataclasses import dataclass

import numpy as np

from ..numerics import functional as F
from ..numerics.tensor import Tensor, as_tensor
from .boxes import giou_diff, pairwise_giou


@dataclass
class LossWeights:
    cls: float = 2.0
    bbox: float = 5.0
    giou: float = 2.0


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def match_cost(class_logits, boxes, gt_boxes, gt_classes, weights):
    """[queries, ground truths] cost: weighted (1 - p_class), L1 and (1 - GIoU)."""
    logits = class_logits.data if isinstance(class_logits, Tensor) else np.asarray(class_logits)
    pb = boxes.data if isinstance(boxes, Tensor) else np.asarray(boxes)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    if len(gt_boxes) == 0:
        return np.zeros((len(pb), 0))
    prob = _sigmoid(logits)[:, gt_classes]
    l1 = np.abs(pb[:, None, :] - gt_boxes[None, :, :]).sum(axis=-1)
    return weights.cls * (1.0 - prob) + weights.bbox * l1 + weights.giou * (1.0 - pairwise_giou(pb, gt_boxes))


@dataclass
class DetectionLoss:
    total: Tensor
    cls: float
    bbox: float
    giou: float


def detection_loss(class_logits, boxes, gt_boxes, gt_classes, assignment, weights):
    """Classification + L1 + (1 - GIoU) over matched pairs, background BCE elsewhere.

    Classification is per-class sigmoid BCE summed over classes: matched
    queries target their ground-truth class, unmatched queries all zeros.
    Every term is divided by the ground-truth count (at least 1).
    """
    class_logits, boxes = as_tensor(class_logits), as_tensor(boxes)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    nq, k = class_logits.shape
    norm = 1.0 / max(len(gt_boxes), 1)
    target = np.zeros((nq, k))
    q_idx = assignment.query_indices
    g_idx = assignment.gt_indices
    if len(q_idx):
        target[q_idx, gt_classes[g_idx]] = 1.0
    cls = F.mul(F.sum(F.bce_with_logits(class_logits, target)), weights.cls * norm)
    if len(q_idx):
        pb = boxes[q_idx]
        tb = gt_boxes[g_idx]
        l1 = F.mul(F.sum(F.abs(F.sub(pb, tb))), weights.bbox * norm)
        gl = F.mul(F.sum(F.sub(1.0, giou_diff(pb, tb))), weights.giou * norm)
        total = F.add(F.add(cls, l1), gl)
        return DetectionLoss(total, float(cls.data), float(l1.data), float(gl.data))
    return DetectionLoss(cls, float(cls.data), 0.0, 0.0)
