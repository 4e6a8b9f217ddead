"""Box conversions and overlap measures (numpy and differentiable)."""
import numpy as np

from ..numerics import functional as F


def cxcywh_to_xyxy(b):
    b = np.asarray(b, dtype=np.float64)
    half = b[..., 2:] / 2.0
    return np.concatenate([b[..., :2] - half, b[..., :2] + half], axis=-1)


def pairwise_giou(a, b):
    """Generalised IoU between every row of ``a`` [N,4] and ``b`` [M,4] (cxcywh)."""
    a, b = cxcywh_to_xyxy(a), cxcywh_to_xyxy(b)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    iou = inter / union
    lt_c = np.minimum(a[:, None, :2], b[None, :, :2])
    rb_c = np.maximum(a[:, None, 2:], b[None, :, 2:])
    hull = np.prod(rb_c - lt_c, axis=-1)
    return iou - (hull - union) / hull


def giou_diff(pred, target):
    """Row-wise GIoU of a predicted box Tensor [N,4] against fixed targets [N,4]."""
    t = cxcywh_to_xyxy(target)
    cx, cy, w, h = (pred[:, i] for i in range(4))
    px0, px1 = F.sub(cx, F.mul(w, 0.5)), F.add(cx, F.mul(w, 0.5))
    py0, py1 = F.sub(cy, F.mul(h, 0.5)), F.add(cy, F.mul(h, 0.5))
    area_p = F.mul(w, h)
    area_t = (t[:, 2] - t[:, 0]) * (t[:, 3] - t[:, 1])
    iw = F.relu(F.sub(F.minimum(px1, t[:, 2]), F.maximum(px0, t[:, 0])))
    ih = F.relu(F.sub(F.minimum(py1, t[:, 3]), F.maximum(py0, t[:, 1])))
    inter = F.mul(iw, ih)
    union = F.sub(F.add(area_p, area_t), inter)
    hw = F.sub(F.maximum(px1, t[:, 2]), F.minimum(px0, t[:, 0]))
    hh = F.sub(F.maximum(py1, t[:, 3]), F.minimum(py0, t[:, 1]))
    hull = F.mul(hw, hh)
    return F.sub(F.div(inter, union), F.div(F.sub(hull, union), hull))
