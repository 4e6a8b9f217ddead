"""Toy DETR decoder and prediction heads."""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..errors import ShapeError
from ..numerics import functional as F
from ..numerics.layers import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention
from ..numerics.tensor import as_tensor


class DecoderLayer(Module):
    """Self-attention, cross-attention to feature tokens, FFN; post-norm residuals."""

    def __init__(self, d, heads, hidden, rng=None):
        self.self_attn = MultiHeadAttention(d, heads, rng)
        self.cross_attn = MultiHeadAttention(d, heads, rng)
        self.ffn = FeedForward(d, hidden, rng)
        self.norm1 = LayerNorm(d)
        self.norm2 = LayerNorm(d)
        self.norm3 = LayerNorm(d)

    def __call__(self, q, q_pos, memory, memory_pos, return_weights=False):
        qp = F.add(q, q_pos)
        q = self.norm1(F.add(q, self.self_attn(qp, qp, q)))
        out, cross = self.cross_attn(F.add(q, q_pos), F.add(memory, memory_pos), memory, return_weights=True)
        q = self.norm2(F.add(q, out))
        q = self.norm3(F.add(q, self.ffn(q)))
        return (q, cross) if return_weights else q


class Decoder(Module):
    def __init__(self, d, heads, hidden, n_layers, rng=None):
        if n_layers < 1:
            raise ValueError("decoder needs at least one layer")
        self.layers = [DecoderLayer(d, heads, hidden, rng) for _ in range(n_layers)]

    def __call__(self, q, q_pos, memory, memory_pos):
        if q.shape[0] == 0:
            raise ShapeError("decoder received an empty query set")
        for layer in self.layers:
            q = layer(q, q_pos, memory, memory_pos)
        return q


def decoder_forward(queries, memory, memory_pos, decoder):
    """Run the decoder on a ``QuerySet``; returns the updated query contents."""
    from ..dgq import sinusoidal_encoding
    if len(queries) == 0:
        raise ShapeError("decoder received an empty query set")
    q_pos = sinusoidal_encoding(queries.normalized(), queries.contents.shape[1])
    return decoder(queries.contents, q_pos, memory, memory_pos)


def inverse_sigmoid(p, eps=1e-5):
    p = np.clip(p, eps, 1.0 - eps)
    return np.log(p / (1.0 - p))


class PredictionHeads(Module):
    """Per-query class logits and a box refined around the query's reference point."""

    def __init__(self, d, num_classes, rng=None):
        self.cls = Linear(d, num_classes, rng)
        self.box = Linear(d, 4, rng)
        self.cls.bias.data[...] = -2.0

    def __call__(self, q, reference):
        """``reference`` is [N, 2] normalised (x, y). Returns (logits, boxes cxcywh)."""
        logits = self.cls(q)
        offset = np.zeros((q.shape[0], 4))
        offset[:, :2] = inverse_sigmoid(np.asarray(reference, dtype=np.float64))
        offset[:, 2:] = inverse_sigmoid(np.full((q.shape[0], 2), 0.1))
        boxes = F.sigmoid(F.add(self.box(q), offset))
        return logits, boxes


@dataclass
class Detection:
    bbox: Tuple[float, float, float, float]  # normalised cx, cy, w, h
    score: float
    label: int
    image_id: int = 0


def predict(class_logits, boxes, score_threshold=0.3, image_id=0):
    """Detections whose best class probability strictly exceeds ``score_threshold``."""
    logits = as_tensor(class_logits).data
    pb = as_tensor(boxes).data
    prob = np.minimum(1.0 / (1.0 + np.exp(-logits)), np.nextafter(1.0, 0.0))
    pb = np.clip(pb, np.finfo(np.float64).tiny, 1.0)
    labels = prob.argmax(axis=1)
    scores = prob[np.arange(len(prob)), labels]
    dets: List[Detection] = []
    for i in range(len(prob)):
        if scores[i] > score_threshold:
            dets.append(Detection(tuple(float(v) for v in pb[i]), float(scores[i]), int(labels[i]), image_id))
    return dets
