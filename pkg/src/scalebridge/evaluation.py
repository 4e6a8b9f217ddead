"""Detection metrics: IoU, COCO-style AP with scale buckets, category mapping."""
import csv
import dataclasses
import io
import json
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .scenegen import BUCKETS, scale_bucket

IOU_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2))
REPORT_KEYS = ("ap", "ap50", "ap_vt", "ap_t", "ap_s", "ap_m", "recall", "query_cost")
_BUCKET_KEYS = {"very_tiny": "ap_vt", "tiny": "ap_t", "small": "ap_s", "medium": "ap_m"}
UNDEFINED = "undefined"

GroundTruth = namedtuple("GroundTruth", "bbox label image_id", defaults=(0,))


def iou(a, b):
    """IoU of two (cx, cy, w, h) boxes."""
    ax0, ay0, ax1, ay1 = a[0] - a[2] / 2, a[1] - a[3] / 2, a[0] + a[2] / 2, a[1] + a[3] / 2
    bx0, by0, bx1, by1 = b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


def _iou_matrix(dets, gts):
    if not len(dets) or not len(gts):
        return np.zeros((len(dets), len(gts)))
    a = np.array([d.bbox for d in dets], dtype=np.float64)
    b = np.array([g.bbox for g in gts], dtype=np.float64)
    a0, a1 = a[:, :2] - a[:, 2:] / 2, a[:, :2] + a[:, 2:] / 2
    b0, b1 = b[:, :2] - b[:, 2:] / 2, b[:, :2] + b[:, 2:] / 2
    wh = np.clip(np.minimum(a1[:, None], b1[None]) - np.maximum(a0[:, None], b0[None]), 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def _area_under_pr(tp, n_gt):
    """All-point interpolated area under the precision/recall curve."""
    if n_gt == 0:
        return None
    if not len(tp):
        return 0.0
    tp = np.asarray(tp, dtype=np.float64)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = np.concatenate([[0.0], ctp / n_gt, [ctp[-1] / n_gt]])
    precision = np.concatenate([[1.0], ctp / (ctp + cfp), [0.0]])
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    steps = np.nonzero(recall[1:] != recall[:-1])[0]
    return float(np.sum((recall[steps + 1] - recall[steps]) * precision[steps + 1]))


def _match(dets, gts, threshold, valid=None):
    """Greedy score-ordered matching (ties keep detection order).

    Returns per-detection outcomes in that order: 1 (TP), 0 (FP), or -1 when
    the detection matched an ignored ground truth. ``valid`` flags which
    ground truths count. Boxes from different images never match.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    valid = np.ones(len(gts), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    ious = _iou_matrix(dets, gts)
    if len(dets) and len(gts):
        same = (np.array([d.image_id for d in dets])[:, None] == np.array([g.image_id for g in gts])[None, :])
        ious = np.where(same, ious, -1.0)
    taken = np.zeros(len(gts), dtype=bool)
    outcome = []
    for i in order:
        row = ious[i]
        hit = -1
        for pool in (valid, ~valid):
            cand = np.nonzero(pool & ~taken & (row >= threshold))[0]
            if len(cand):
                hit = int(cand[np.argmax(row[cand])])
                break
        if hit < 0:
            outcome.append(0)
        else:
            taken[hit] = True
            outcome.append(1 if valid[hit] else -1)
    return outcome


def _ap_at(dets, gts, threshold, gt_filter=None, ignore_cross=True):
    per_class = []
    for label in sorted({g.label for g in gts}):
        d_c = [d for d in dets if d.label == label]
        g_c = [g for g in gts if g.label == label]
        valid = np.array([True if gt_filter is None else bool(gt_filter(g)) for g in g_c])
        if not valid.any():
            continue
        out = _match(d_c, g_c, threshold, valid)
        tps = [1 if o == 1 else 0 for o in out if not (o == -1 and ignore_cross)]
        per_class.append(_area_under_pr(tps, int(valid.sum())))
    if not per_class:
        return None
    return float(np.mean(per_class))


def compute_ap(detections, ground_truths, iou_threshold=None):
    """Class-averaged AP. ``iou_threshold=None`` averages over 0.50:0.05:0.95.

    Returns ``None`` when there are no ground truths.
    """
    thresholds = IOU_THRESHOLDS if iou_threshold is None else (iou_threshold,)
    vals = [_ap_at(detections, ground_truths, t) for t in thresholds]
    if vals[0] is None:
        return None
    return float(np.mean(vals))


def recall_at(detections, ground_truths, threshold=0.5):
    """Fraction of ground truths matched by some detection (``None`` if there are none)."""
    if not len(ground_truths):
        return None
    found = 0
    for label in {g.label for g in ground_truths}:
        d_c = [d for d in detections if d.label == label]
        g_c = [g for g in ground_truths if g.label == label]
        found += sum(o == 1 for o in _match(d_c, g_c, threshold))
    return found / len(ground_truths)


@dataclass
class MetricsReport:
    ap: Optional[float]
    ap50: Optional[float]
    per_bucket: Dict[str, Optional[float]] = field(default_factory=dict)
    recall: Optional[float] = None
    query_cost: int = 0

    def as_dict(self):
        out = {"ap": self.ap, "ap50": self.ap50}
        for bucket, key in _BUCKET_KEYS.items():
            out[key] = self.per_bucket.get(bucket)
        out["recall"] = self.recall
        out["query_cost"] = int(self.query_cost)
        return out

    def to_text(self):
        d = {k: (UNDEFINED if v is None else v) for k, v in self.as_dict().items()}
        return json.dumps(d, indent=2) + "\n"

    def csv_row(self):
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow(
            [UNDEFINED if v is None else (repr(v) if isinstance(v, float) else v) for v in self.as_dict().values()])
        return buf.getvalue()

    @staticmethod
    def csv_header():
        return ",".join(REPORT_KEYS)

    @classmethod
    def from_text(cls, text):
        d = json.loads(text)
        if tuple(d) != REPORT_KEYS:
            raise ValueError(f"report keys {tuple(d)} differ from {REPORT_KEYS}")
        d = {k: (None if v == UNDEFINED else v) for k, v in d.items()}
        per_bucket = {b: d[k] for b, k in _BUCKET_KEYS.items()}
        return cls(d["ap"], d["ap50"], per_bucket, d["recall"], d["query_cost"])


def scale_ap_report(detections, ground_truths, query_cost=0, cross_bucket="ignore"):
    """AP overall, at IoU 0.5, and per scale bucket (bucketed by box area)."""
    if cross_bucket not in ("ignore", "fp"):
        raise ValueError(f"cross_bucket must be 'ignore' or 'fp', got {cross_bucket!r}")
    per_bucket = {}
    for bucket in BUCKETS:
        members = [g for g in ground_truths if scale_bucket(g.bbox) == bucket]
        if not members:
            per_bucket[bucket] = None
            continue
        flt = (lambda g, b=bucket: scale_bucket(g.bbox) == b)
        vals = [_ap_at(detections, ground_truths, t, flt, cross_bucket == "ignore") for t in IOU_THRESHOLDS]
        per_bucket[bucket] = float(np.mean(vals))
    return MetricsReport(
        ap=compute_ap(detections, ground_truths),
        ap50=compute_ap(detections, ground_truths, 0.5),
        per_bucket=per_bucket,
        recall=recall_at(detections, ground_truths, 0.5),
        query_cost=int(query_cost),
    )


def bucket_counts(ground_truths):
    counts = {b: 0 for b in BUCKETS}
    for g in ground_truths:
        counts[scale_bucket(g.bbox)] += 1
    return counts


# cross-dataset category mapping -----------------------------------------

EXCLUDE = None

AITOD_CLASSES = ("airplane", "bridge", "storage-tank", "ship", "swimming-pool", "vehicle", "person", "wind-mill")
VISDRONE_CLASSES = ("pedestrian", "people", "bicycle", "car", "van", "truck", "tricycle",
                    "awning-tricycle", "bus", "motor")

VISDRONE_TO_AITOD = {
    "car": "vehicle", "van": "vehicle", "truck": "vehicle", "tricycle": "vehicle",
    "awning-tricycle": "vehicle", "bus": "vehicle", "motor": "vehicle",
    "pedestrian": "person", "people": "person",
    "bicycle": EXCLUDE,
}
AITOD_EVAL = {name: (name if name in ("vehicle", "person") else EXCLUDE) for name in AITOD_CLASSES}


def map_categories(labels, mapping):
    """Translate labels through ``mapping``; labels mapped to ``EXCLUDE`` are dropped."""
    out = []
    for label in labels:
        if label not in mapping:
            raise KeyError(f"label {label!r} has no mapping and is not marked exclude")
        target = mapping[label]
        if target is not EXCLUDE:
            out.append(target)
    return out


def map_records(records, mapping):
    """Apply ``map_categories`` to detection / ground-truth records, dropping excluded ones."""
    out = []
    for r in records:
        if r.label not in mapping:
            raise KeyError(f"label {r.label!r} has no mapping and is not marked exclude")
        target = mapping[r.label]
        if target is not EXCLUDE:
            out.append(r._replace(label=target) if hasattr(r, "_replace") else _relabel(r, target))
    return out


def _relabel(record, label):
    return dataclasses.replace(record, label=label)
