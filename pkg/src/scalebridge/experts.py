"""Synthetic scale-biased experts emitting multi-level feature pyramids.

Stand-ins for real backbones: a *tiny* expert keeps full resolution through
its first convolution with zero-DC (high-pass) kernels and max-pools so small
peaks survive downsampling, a *general* expert
pools aggressively before a smoothing (low-pass) stem, and a *mix* expert
averages the two stems. All experts project to a common channel width so
their pyramids can be summed.
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from .config import ExpertEntry, ExpertsConfig, rng_stream
from .errors import ConfigurationError
from .numerics import functional as F
from .numerics.layers import Conv1x1, Conv3x3, Module
from .numerics.tensor import Tensor, no_grad

CATEGORIES = ("tiny", "general", "mix")


class _Stem(Module):
    def __init__(self, kind, width, rng):
        self.kind = kind
        self.conv1 = Conv3x3(3, width)
        self.conv2 = Conv3x3(width, width)
        w1 = rng.normal(0.0, np.sqrt(2.0 / 27.0), size=(width, 3, 3, 3))
        if kind == "tiny":
            norm = np.linalg.norm(w1, axis=(2, 3), keepdims=True)
            w1 -= w1.mean(axis=(2, 3), keepdims=True)
            w1 *= norm / np.linalg.norm(w1, axis=(2, 3), keepdims=True)
        else:
            w1 = np.abs(w1)
        self.conv1.weight.data[...] = w1
        self.conv2.weight.data[...] = rng.normal(0.0, np.sqrt(2.0 / (9 * width)), size=(width, width, 3, 3))

    def __call__(self, image, stride):
        if self.kind == "tiny":
            x = F.relu(self.conv1(image))
            x = F.max_pool(x, 2)
            x = F.relu(self.conv2(x))
            return F.max_pool(x, stride // 2) if stride > 2 else x
        x = F.avg_pool(image, 4)
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        return F.avg_pool(x, stride // 4) if stride > 4 else x


class ExpertNet(Module):
    def __init__(self, category, width, channels, rng):
        if category == "mix":
            self.stems = [_Stem("tiny", width, rng), _Stem("general", width, rng)]
        else:
            self.stems = [_Stem(category, width, rng)]
        self.proj = Conv1x1(width, channels)
        self.proj.weight.data[...] = rng.normal(0.0, np.sqrt(2.0 / width), size=(channels, width))

    def __call__(self, image, stride, levels):
        feats = [stem(image, stride) for stem in self.stems]
        x = feats[0] if len(feats) == 1 else F.mul(F.add(feats[0], feats[1]), 0.5)
        pyramid = []
        for level in range(levels):
            if level:
                x = F.avg_pool(x, 2)
            pyramid.append(self.proj(x))
        return pyramid


@dataclass
class ExpertSpec:
    id: int
    category: str
    levels: int
    channels: int
    stride: int
    params: ExpertNet
    trainable: bool = False

    def __post_init__(self):
        self.params.set_trainable(self.trainable)

    def set_trainable(self, flag):
        self.trainable = bool(flag)
        self.params.set_trainable(self.trainable)


@dataclass
class FeaturePyramid:
    levels: List[Tensor]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


def extract_features(expert, image):
    """Run one expert on a [3,H,W] image.

    Frozen experts build no autodiff graph, so nothing flows into them.
    """
    image = image if isinstance(image, Tensor) else Tensor(image)
    _, h, w = image.shape
    total = expert.stride * 2 ** (expert.levels - 1)
    if h % total or w % total:
        raise ConfigurationError(
            f"image size {(h, w)} is not divisible by stride*2^(L-1) = {total}"
        )
    if expert.trainable:
        levels = expert.params(image, expert.stride, expert.levels)
    else:
        with no_grad():
            levels = expert.params(image, expert.stride, expert.levels)
    return FeaturePyramid(levels)


def build_registry(config=None):
    """Create experts from an ``ExpertsConfig``.

    Explicit ``entries`` take precedence over the per-category counts. Ids
    are assigned in entry order (category blocks tiny, general, mix when
    built from counts).
    """
    config = config or ExpertsConfig()
    entries = list(config.entries)
    if not entries:
        for cat in CATEGORIES:
            n = getattr(config, cat)
            if n < 0:
                raise ConfigurationError(f"negative expert count for category {cat}")
            entries += [ExpertEntry(cat, config.width, 0) for _ in range(n)]
    for cat in CATEGORIES:
        if not any(e.category == cat for e in entries):
            raise ConfigurationError(f"category {cat} has no expert")
    if config.levels < 1 or config.stride < 4 or config.stride & (config.stride - 1):
        raise ConfigurationError("levels must be >= 1 and stride a power of two >= 4")

    registry = []
    for eid, entry in enumerate(entries):
        if entry.category not in CATEGORIES:
            raise ConfigurationError(f"unknown expert category {entry.category!r}")
        rng = rng_stream(config.seed, "expert", eid, entry.seed)
        net = ExpertNet(entry.category, entry.width, config.channels, rng)
        registry.append(ExpertSpec(eid, entry.category, config.levels, config.channels,
                                   config.stride, net, config.trainable))
    return registry


def category_of(registry):
    return {e.id: e.category for e in registry}


def zero_expert(expert):
    """Zero every parameter of an expert in place (used for sanity checks)."""
    for p in expert.params.parameters():
        p.data[...] = 0.0
    return expert
