"""Run configuration: typed sections, strict INI parsing, named RNG streams."""
import configparser
import dataclasses
import io
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List

import numpy as np

from .errors import ConfigurationError


@dataclass
class ExpertEntry:
    category: str
    width: int = 32
    seed: int = 0


@dataclass
class ExpertsConfig:
    tiny: int = 2
    general: int = 2
    mix: int = 2
    channels: int = 32
    width: int = 32
    seed: int = 7
    levels: int = 3
    stride: int = 8
    trainable: bool = False
    entries: List[ExpertEntry] = field(default_factory=list)


@dataclass
class RemConfig:
    heads: int = 4
    stem_width: int = 16
    base_pool: int = 4


@dataclass
class DgqConfig:
    sigma: float = 1.5
    occupancy_weight: float = 0.1
    tier_scale: float = 1.0 / 30.0
    score_threshold: float = 0.3
    occupancy_threshold: float = 0.05
    occupancy_temperature: float = 0.02


@dataclass
class DetrConfig:
    n_layers: int = 2
    ffn_hidden: int = 64
    heads: int = 4
    cost_class: float = 2.0
    cost_bbox: float = 5.0
    cost_giou: float = 2.0


@dataclass
class ModelConfig:
    use_rem: bool = True
    use_dgq: bool = True


@dataclass
class TrainConfig:
    epochs: int = 30
    optimizer: str = "adamw"
    lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    batch: int = 1
    seed: int = 0


@dataclass
class DataConfig:
    image_size: int = 128
    count_min: int = 0
    count_max: int = 80
    scene_count: int = 200
    num_classes: int = 3
    size_log_mean: float = 2.5227
    size_log_std: float = 0.2313
    size_min: float = 2.0
    size_max: float = 96.0
    aspect_min: float = 0.6
    noise: float = 0.02
    max_retries: int = 100
    embed_images: bool = False


@dataclass
class EvalConfig:
    cross_bucket: str = "ignore"


@dataclass
class PathsConfig:
    dataset: str = "runs/scenes.txt"
    checkpoint: str = "runs/model.npz"
    report: str = "runs/report"
    train_log: str = "runs/train_log.csv"


@dataclass
class RunConfig:
    experts: ExpertsConfig = field(default_factory=ExpertsConfig)
    rem: RemConfig = field(default_factory=RemConfig)
    dgq: DgqConfig = field(default_factory=DgqConfig)
    detr: DetrConfig = field(default_factory=DetrConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_SECTIONS = [f.name for f in dataclasses.fields(RunConfig)]


def _convert(raw, default, where):
    try:
        if isinstance(default, bool):
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(Fraction(raw.strip()))
        return raw.strip()
    except (ValueError, ZeroDivisionError):
        raise ConfigurationError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def _fill(obj, items, section):
    known = {f.name for f in dataclasses.fields(obj) if f.name != "entries"}
    for key, raw in items:
        if key not in known:
            raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
        setattr(obj, key, _convert(raw, getattr(obj, key), f"[{section}] {key}"))


def loads(text):
    """Parse INI text into a ``RunConfig``; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(str(exc)) from None
    cfg = RunConfig()
    entries = []
    for section in parser.sections():
        items = parser.items(section)
        if section.startswith("expert."):
            try:
                idx = int(section.split(".", 1)[1])
            except ValueError:
                raise ConfigurationError(f"bad expert section name [{section}]") from None
            entry = ExpertEntry(category="")
            for key, raw in items:
                if key not in ("category", "width", "seed"):
                    raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
            entry.category = parser.get(section, "category", fallback="").strip()
            if not entry.category:
                raise ConfigurationError(f"[{section}] needs a category")
            if parser.has_option(section, "width"):
                entry.width = _convert(parser.get(section, "width"), 0, section)
            else:
                entry.width = None  # inherits [experts] width below
            entry.seed = _convert(parser.get(section, "seed", fallback="0"), 0, section)
            entries.append((idx, entry))
        elif section in _SECTIONS:
            _fill(getattr(cfg, section), items, section)
        else:
            raise ConfigurationError(f"unknown config section [{section}]")
    for _, entry in entries:
        if entry.width is None:
            entry.width = cfg.experts.width
    cfg.experts.entries = [e for _, e in sorted(entries, key=lambda t: t[0])]
    return cfg


def load(path):
    with open(path) as fh:
        return loads(fh.read())


def dumps(cfg):
    """Serialise every effective value; ``loads(dumps(c)) == c``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name in _SECTIONS:
        section = getattr(cfg, name)
        parser[name] = {}
        for f in dataclasses.fields(section):
            if f.name == "entries":
                continue
            value = getattr(section, f.name)
            parser[name][f.name] = repr(value) if isinstance(value, float) else str(value)
    for i, entry in enumerate(cfg.experts.entries):
        parser[f"expert.{i}"] = {"category": entry.category, "width": str(entry.width), "seed": str(entry.seed)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def rng_stream(root_seed, name, *ids):
    """Independent generator for a named sub-stream of the root seed."""
    key = [int(root_seed) & 0xFFFFFFFF, zlib.crc32(name.encode())] + [int(i) for i in ids]
    return np.random.default_rng(np.random.SeedSequence(key))


def stream_seed(root_seed, name, *ids):
    """Integer seed derived from a named sub-stream (stored in data files)."""
    return int(rng_stream(root_seed, name, *ids).integers(0, 2**31 - 1))
