"""Routing-enhanced mixture attention.

route -> activate (top-1 per category) -> calibrate (per-expert scale) -> per-level
gate -> fuse -> self-attention over the highest-resolution fused level.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ShapeError
from .experts import FeaturePyramid, extract_features
from .numerics import functional as F
from .numerics.layers import Conv3x3, Linear, Module, MultiHeadAttention
from .numerics.tensor import Parameter, Tensor, as_tensor


@dataclass
class RoutingScores:
    scores: Tensor

    @property
    def values(self):
        return self.scores.data

    def __len__(self):
        return self.scores.shape[0]


@dataclass(frozen=True)
class ActivationSet:
    active: Tuple[int, ...]

    def __contains__(self, eid):
        return eid in self.active

    def __len__(self):
        return len(self.active)


class RoutingStem(Module):
    """Conv3x3 -> ReLU -> GAP -> FC producing E routing logits.

    The convolution has no bias and the FC bias starts at zero, so scaling
    the input by a positive constant scales every logit by the same factor.
    """

    def __init__(self, n_experts, width=16, rng=None, in_channels=3):
        self.conv = Conv3x3(in_channels, width, rng, bias=False)
        self.fc = Linear(width, n_experts, rng)

    def logits(self, base):
        return self.fc(F.gap(F.relu(self.conv(base))))


def base_features(image, pool=4):
    """Fixed base-backbone stand-in: average-pooled image."""
    return F.avg_pool(as_tensor(image), pool)


def route(base, stem):
    return RoutingScores(F.softmax(stem.logits(base), axis=0))


def activate(scores, registry):
    """Per category, the expert with the highest score; ties go to the lowest id."""
    s = scores.values if isinstance(scores, RoutingScores) else np.asarray(
        scores.data if isinstance(scores, Tensor) else scores, dtype=np.float64)
    best = {}
    for expert in sorted(registry, key=lambda e: e.id):
        cur = best.get(expert.category)
        if cur is None or s[expert.id] > s[cur]:
            best[expert.category] = expert.id
    return ActivationSet(tuple(sorted(best.values())))


def calibrate(pyramid, factor):
    """Scale every level of an expert pyramid by its learned calibration factor."""
    levels = pyramid.levels if isinstance(pyramid, FeaturePyramid) else pyramid
    return FeaturePyramid([F.mul(f, factor) for f in levels])


def gate(level_features, gate_layer):
    """Softmax gate over experts from GAP of their concatenated level features.

    ``level_features`` are the calibrated maps of the active experts in
    ascending id order.
    """
    shapes = {f.shape for f in level_features}
    if len(shapes) != 1:
        raise ShapeError(f"gate: expert features disagree in shape: {sorted(shapes)}")
    g = F.gap(F.concat(level_features, axis=0))
    return F.softmax(gate_layer(g), axis=0)


def fuse(scores, weights, pyramids):
    """Per level, sum over active experts of routing score x level gate x calibrated features.

    ``scores`` holds the active experts' routing scores, ``weights[l]`` the
    level-l gate, and ``pyramids`` the calibrated pyramids, all in the same
    expert order.
    """
    scores = as_tensor(scores)
    n_levels = len(pyramids[0])
    fused = []
    for level in range(n_levels):
        w = as_tensor(weights[level])
        acc = None
        for k, pyr in enumerate(pyramids):
            term = F.mul(pyr[level], F.mul(scores[k], w[k]))
            acc = term if acc is None else F.add(acc, term)
        fused.append(acc)
    return FeaturePyramid(fused)


def tokens_from_map(fmap):
    c, h, w = fmap.shape
    return F.transpose(F.reshape(fmap, (c, h * w)))


def map_from_tokens(tokens, h, w):
    n, c = tokens.shape
    return F.reshape(F.transpose(tokens), (c, h, w))


def integrate(fused, attention, return_weights=False):
    """Self-attention over the tokens of the highest-resolution fused level.

    Returns ``(tokens [H*W, C], map [C, H, W])``. A residual connection keeps
    each token's own features alongside the attended context.
    """
    level0 = fused[0] if isinstance(fused, FeaturePyramid) else fused
    c, h, w = level0.shape
    if h * w == 0:
        raise ShapeError("integrate: fused level has no tokens")
    x = tokens_from_map(level0)
    out, attn = attention(x, return_weights=True)
    final = F.add(x, out)
    result = (final, map_from_tokens(final, h, w))
    return result + (attn,) if return_weights else result


@dataclass
class REMOutput:
    scores: RoutingScores
    active: ActivationSet
    gates: List[Tensor]
    fused: FeaturePyramid
    final_tokens: Tensor
    final_map: Tensor


class REM(Module):
    def __init__(self, registry, channels, heads=4, stem_width=16, base_pool=4, rng=None):
        n_cat = len({e.category for e in registry})
        self.base_pool = base_pool
        self.stem = RoutingStem(len(registry), stem_width, rng)
        self.calibration = Parameter(np.ones(len(registry)), "calibration")
        levels = registry[0].levels
        self.gates = [Linear(n_cat * channels, n_cat, zero=True) for _ in range(levels)]
        self.attention = MultiHeadAttention(channels, heads, rng, out_proj=False)

    def __call__(self, image, registry, features=None, active=None):
        """Full REM pass.

        ``features(expert)`` may supply cached pyramids; ``active`` pins the
        activation set instead of deriving it from the scores.
        """
        image = as_tensor(image)
        scores = route(base_features(image, self.base_pool), self.stem)
        if active is None:
            active = activate(scores, registry)
        by_id = {e.id: e for e in registry}
        pyramids = []
        for eid in active.active:
            pyr = features(by_id[eid]) if features is not None else extract_features(by_id[eid], image)
            pyramids.append(calibrate(pyr, self.calibration[eid]))
        gates = [gate([p[level] for p in pyramids], self.gates[level])
                 for level in range(len(pyramids[0]))]
        idx = np.array(active.active)
        fused = fuse(scores.scores[idx], gates, pyramids)
        tokens, fmap = integrate(fused, self.attention)
        return REMOutput(scores, active, gates, fused, tokens, fmap)
