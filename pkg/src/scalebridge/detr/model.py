"""The full toy detector: experts -> REM -> DGQ -> decoder -> heads."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import RunConfig, rng_stream
from ..dgq import (CBAMRefine, DensityHead, DensityMap, QuerySet, density_loss,
                   estimate_count, fixed_budget, gt_density, predict_density, select_tier,
                   sample_cells, sinusoidal_encoding)
from ..experts import build_registry, extract_features
from ..numerics import functional as F
from ..numerics.layers import Module
from ..numerics.tensor import Parameter, Tensor
from ..rem import REM, ActivationSet, tokens_from_map
from .decoder import Decoder, PredictionHeads, predict
from .losses import LossWeights, detection_loss, match_cost
from .matching import Assignment, hungarian_match


@dataclass
class ForwardPlan:
    """Discrete choices of one forward pass, replayable for gradient checks."""
    active: Optional[ActivationSet]
    num_queries: int
    estimated_count: Optional[int]
    cells: np.ndarray
    positions: np.ndarray
    assignment: Assignment


@dataclass
class ForwardOutput:
    total: Tensor
    det_loss: Tensor
    density_loss: Optional[Tensor]
    class_logits: Tensor
    boxes: Tensor
    density: Optional[DensityMap]
    gt_density: DensityMap
    queries: QuerySet
    plan: ForwardPlan


def _grid_positions(h, w):
    ys, xs = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    return np.stack([xs.reshape(-1) / w, ys.reshape(-1) / h], axis=1)


class ScaleBridgeModel(Module):
    def __init__(self, cfg=None, registry=None):
        cfg = cfg or RunConfig()
        self.cfg = cfg
        self.registry = registry if registry is not None else build_registry(cfg.experts)
        self.experts = [e.params for e in self.registry]
        rng = rng_stream(cfg.train.seed, "init")
        c = cfg.experts.channels
        self.rem = REM(self.registry, c, cfg.rem.heads, cfg.rem.stem_width, cfg.rem.base_pool, rng)
        self.density_head = DensityHead(c, rng, out_bias=0.01)
        self.refine = CBAMRefine(c, rng=rng)
        self.query_content = Parameter(rng.normal(0.0, 0.1, size=c), "query_content")
        self.decoder = Decoder(c, cfg.detr.heads, cfg.detr.ffn_hidden, cfg.detr.n_layers, rng)
        self.heads = PredictionHeads(c, cfg.data.num_classes, rng)
        plain = [e for e in self.registry if e.category == "general"]
        self.plain_expert = plain[0] if plain else self.registry[0]

    @property
    def loss_weights(self):
        d = self.cfg.detr
        return LossWeights(d.cost_class, d.cost_bbox, d.cost_giou)

    def trainable_parameters(self):
        return [(n, p) for n, p in self.named_parameters() if p.trainable]

    def _features(self, image, features):
        if features is not None:
            return features
        return lambda expert: extract_features(expert, image)

    def forward(self, scene, rng=None, plan=None, features=None):
        """Run one scene; ``plan`` replays the discrete choices of an earlier pass."""
        cfg = self.cfg
        image = Tensor(scene.image)
        feat = self._features(image, features)
        if cfg.model.use_rem:
            rem_out = self.rem(image, self.registry, feat, active=None if plan is None else plan.active)
            fused, final_map, active = rem_out.fused, rem_out.final_map, rem_out.active
        else:
            fused = feat(self.plain_expert)
            final_map, active = fused[0], None
        _, h1, w1 = final_map.shape
        stride = scene.image.shape[1] / h1
        gt_map = gt_density(scene.centers, (h1, w1), cell_size=stride, sigma=cfg.dgq.sigma)

        rng = rng if rng is not None else np.random.default_rng(0)
        dmap = None
        den = None
        if cfg.model.use_dgq:
            dmap = predict_density(final_map, self.density_head, stride)
            memory0 = self.refine(final_map, dmap.grid)
            est = estimate_count(dmap)
            nq = select_tier(est, cfg.dgq.tier_scale) if plan is None else plan.num_queries
            den = density_loss(dmap, gt_map, cfg.dgq.occupancy_weight,
                               cfg.dgq.occupancy_threshold, cfg.dgq.occupancy_temperature)
            weights = dmap.values
        else:
            memory0 = final_map
            est = None
            nq = fixed_budget(cfg.dgq.tier_scale) if plan is None else plan.num_queries
            weights = np.zeros((h1, w1))
        if plan is None:
            cells = sample_cells(weights, nq, rng)
            offsets = rng.uniform(0.0, 1.0, size=(nq, 2))
            positions = np.stack([cells[:, 1] + offsets[:, 0], cells[:, 0] + offsets[:, 1]], axis=1)
        else:
            cells, positions = plan.cells, plan.positions
        ref = positions / np.array([w1, h1], dtype=np.float64)
        c = final_map.shape[0]
        q_pos = sinusoidal_encoding(ref, c)
        queries = QuerySet(positions, cells, F.add(self.query_content, q_pos), (h1, w1))

        levels = [memory0] + list(fused.levels[1:])
        memory = F.concat([tokens_from_map(m) for m in levels], axis=0)
        memory_pos = np.concatenate([sinusoidal_encoding(_grid_positions(*m.shape[1:]), c) for m in levels])
        q = self.decoder(queries.contents, q_pos, memory, memory_pos)
        logits, boxes = self.heads(q, ref)

        gt_boxes = scene.normalized_boxes()
        if plan is None:
            cost = match_cost(logits, boxes, gt_boxes, scene.classes, self.loss_weights)
            assignment = hungarian_match(cost)
        else:
            assignment = plan.assignment
        det = detection_loss(logits, boxes, gt_boxes, scene.classes, assignment, self.loss_weights)
        total = det.total if den is None else F.add(det.total, den)
        new_plan = ForwardPlan(active, nq, est, cells, positions, assignment)
        return ForwardOutput(total, det.total, den, logits, boxes, dmap, gt_map, queries, new_plan)

    __call__ = forward

    def detect(self, scene, rng=None, features=None, score_threshold=None, image_id=0):
        """Inference: detections in normalised coordinates plus the forward output."""
        from ..numerics.tensor import no_grad
        with no_grad():
            out = self.forward(scene, rng=rng, features=features)
        tau = self.cfg.dgq.score_threshold if score_threshold is None else score_threshold
        return predict(out.class_logits, out.boxes, tau, image_id), out


class FeatureCache:
    """Memoised expert pyramids per scene; only valid for frozen experts."""

    def __init__(self):
        self._store = {}

    def for_scene(self, key, image):
        def fn(expert):
            if expert.trainable:
                return extract_features(expert, image)
            k = (key, expert.id)
            if k not in self._store:
                self._store[k] = extract_features(expert, image)
            return self._store[k]
        return fn

    def clear(self):
        self._store.clear()
