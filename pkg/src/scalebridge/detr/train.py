"""Training loop, evaluation pass and checkpoint container."""
import logging
import os
from dataclasses import dataclass

import numpy as np

from ..config import rng_stream
from ..errors import ConfigurationError, NonFiniteLossError
from ..evaluation import GroundTruth, scale_ap_report
from ..numerics.optim import clip_grad_norm, make_optimizer
from .model import FeatureCache

log = logging.getLogger(__name__)


@dataclass
class EpochMetrics:
    epoch: int
    det_loss: float
    density_loss: float
    total: float


def make_model_optimizer(model):
    t = model.cfg.train
    params = [p for _, p in model.named_parameters()]
    return make_optimizer(t.optimizer, params, t.lr, momentum=t.momentum, weight_decay=t.weight_decay)


def train_epoch(model, scenes, optimizer, epoch=1, cache=None):
    """One pass over ``scenes`` (batch size 1); returns mean losses."""
    if not scenes:
        raise ValueError("train_epoch needs at least one scene")
    cache = cache if cache is not None else FeatureCache()
    seed = model.cfg.train.seed
    clip = model.cfg.train.clip_norm
    sums = np.zeros(3)
    for i, scene in enumerate(scenes):
        rng = rng_stream(seed, "sampling", epoch, i)
        optimizer.zero_grad()
        out = model.forward(scene, rng=rng, features=cache.for_scene(i, scene.image))
        total = float(out.total.data)
        if not np.isfinite(total):
            raise NonFiniteLossError(f"non-finite loss {total} on scene {i} (seed {scene.seed}) in epoch {epoch}")
        out.total.backward()
        if clip:
            clip_grad_norm(optimizer.params, clip)
        optimizer.step()
        den = 0.0 if out.density_loss is None else float(out.density_loss.data)
        sums += (float(out.det_loss.data), den, total)
    mean = sums / len(scenes)
    return EpochMetrics(epoch, float(mean[0]), float(mean[1]), float(mean[2]))


def fit(model, scenes, epochs, optimizer=None, start_epoch=1, log_path=None, cache=None):
    """Train for ``epochs`` epochs, appending rows to a CSV log if given."""
    optimizer = optimizer or make_model_optimizer(model)
    cache = cache if cache is not None else FeatureCache()
    history = []
    if log_path and not (os.path.exists(log_path) and start_epoch > 1):
        with open(log_path, "w") as fh:
            fh.write("epoch,det_loss,density_loss,total\n")
    for epoch in range(start_epoch, start_epoch + epochs):
        m = train_epoch(model, scenes, optimizer, epoch, cache)
        history.append(m)
        log.info("epoch %d det %.5f density %.5f total %.5f", epoch, m.det_loss, m.density_loss, m.total)
        if log_path:
            with open(log_path, "a") as fh:
                fh.write(f"{m.epoch},{m.det_loss!r},{m.density_loss!r},{m.total!r}\n")
    return history, optimizer


def evaluate(model, scenes, cache=None, eval_seed=None):
    """Detections for every scene, scored into a ``MetricsReport`` (pixel units)."""
    cache = cache if cache is not None else FeatureCache()
    seed = model.cfg.train.seed if eval_seed is None else eval_seed
    dets, gts = [], []
    cost = 0
    for i, scene in enumerate(scenes):
        rng = rng_stream(seed, "eval-sampling", i)
        found, out = model.detect(scene, rng=rng, features=cache.for_scene(i, scene.image), image_id=i)
        h, w = scene.size
        scale = np.array([w, h, w, h], dtype=np.float64)
        for d in found:
            d.bbox = tuple(float(v) for v in np.asarray(d.bbox) * scale)
        dets += found
        gts += [GroundTruth(tuple(float(v) for v in b), int(c), i) for b, c in zip(scene.boxes, scene.classes)]
        cost += out.plan.num_queries * len(scene.boxes)
    return scale_ap_report(dets, gts, query_cost=cost, cross_bucket=model.cfg.eval.cross_bucket)


# checkpoints ----------------------------------------------------------------

def save_checkpoint(model, path, epoch=0, optimizer=None):
    """Named parameter tensors (and optimiser buffers) in an ``.npz`` container."""
    arrays = {f"param/{name}": p.data for name, p in model.named_parameters()}
    arrays["meta/epoch"] = np.array(epoch, dtype=np.int64)
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        for key, bufs in _optimizer_buffers(optimizer).items():
            for p, buf in zip(optimizer.params, bufs):
                arrays[f"optim/{key}/{names[id(p)]}"] = buf
        if hasattr(optimizer, "t"):
            arrays["optim/t"] = np.array(optimizer.t, dtype=np.int64)
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _optimizer_buffers(optimizer):
    if hasattr(optimizer, "_velocity"):
        return {"velocity": optimizer._velocity}
    return {"m": optimizer._m, "v": optimizer._v}


def load_checkpoint(model, path, optimizer=None):
    """Restore parameters in place; returns the stored epoch."""
    with np.load(path) as data:
        stored = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
        params = dict(model.named_parameters())
        for name, p in params.items():
            if name not in stored:
                raise ConfigurationError(f"checkpoint lacks tensor {name!r}")
            if stored[name].shape != p.shape:
                raise ConfigurationError(
                    f"tensor {name!r}: checkpoint shape {stored[name].shape} vs model shape {p.shape}")
        extra = sorted(set(stored) - set(params))
        if extra:
            raise ConfigurationError(f"checkpoint has unknown tensor {extra[0]!r}")
        for name, p in params.items():
            p.data[...] = stored[name]
        if optimizer is not None:
            names = {id(p): n for n, p in model.named_parameters()}
            for key, bufs in _optimizer_buffers(optimizer).items():
                for p, buf in zip(optimizer.params, bufs):
                    k = f"optim/{key}/{names[id(p)]}"
                    if k in data.files:
                        buf[...] = data[k]
            if "optim/t" in data.files and hasattr(optimizer, "t"):
                optimizer.t = int(data["optim/t"])
        return int(data["meta/epoch"])
