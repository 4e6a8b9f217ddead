"""Deterministic synthetic aerial-like scenes with tiny, dense objects.

Object size follows a truncated log-normal on the longer box side, fitted so
that the mean side is about 12.8 px and about 86% of objects are under 16 px.
"""
import base64
import dataclasses
import json
import zlib
from dataclasses import dataclass

import numpy as np

from .config import DataConfig, stream_seed
from .errors import DatasetParseError, SceneGenerationError

BUCKETS = ("very_tiny", "tiny", "small", "medium", "large")
_BUCKET_EDGES = (8.0 ** 2, 16.0 ** 2, 32.0 ** 2, 96.0 ** 2)


@dataclass(eq=False)
class Scene:
    image: np.ndarray  # [3, H, W]
    boxes: np.ndarray  # [n, 4] cx, cy, w, h in pixels
    classes: np.ndarray  # [n] int
    seed: int

    @property
    def size(self):
        return self.image.shape[1], self.image.shape[2]

    @property
    def centers(self):
        return self.boxes[:, :2]

    def normalized_boxes(self):
        h, w = self.size
        return self.boxes / np.array([w, h, w, h], dtype=np.float64)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.seed == other.seed
                and np.array_equal(self.image, other.image)
                and np.array_equal(self.boxes, other.boxes)
                and np.array_equal(self.classes, other.classes))


def scale_bucket(box):
    """Area bucket of a (cx, cy, w, h) box: lower edge inclusive, upper exclusive."""
    w, h = float(box[2]), float(box[3])
    if w <= 0 or h <= 0:
        raise ValueError(f"box sides must be positive, got {w}x{h}")
    area = w * h
    for name, edge in zip(BUCKETS, _BUCKET_EDGES):
        if area < edge:
            return name
    return BUCKETS[-1]


def class_signatures(num_classes):
    base = np.array([[1.0, 0.25, 0.25], [0.25, 1.0, 0.25], [0.25, 0.25, 1.0]])
    if num_classes <= 3:
        return base[:num_classes]
    extra = np.random.default_rng(12345).uniform(0.2, 1.0, size=(num_classes - 3, 3))
    return np.vstack([base, extra])


def sample_object_size(config, rng, limit):
    """Longer side from the truncated log-normal, by bounded rejection."""
    hi = min(config.size_max, limit)
    if hi < config.size_min:
        raise SceneGenerationError(f"objects of at least {config.size_min}px do not fit in a {limit}px image")
    for _ in range(config.max_retries):
        s = float(np.exp(rng.normal(config.size_log_mean, config.size_log_std)))
        if config.size_min <= s <= hi:
            return s
    raise SceneGenerationError(f"no object size in [{config.size_min}, {hi}] after {config.max_retries} draws")


def _render(image, box, signature):
    cx, cy, w, h = box
    _, H, W = image.shape
    sx, sy = w / 4.0, h / 4.0
    x0, x1 = max(int(cx - w), 0), min(int(np.ceil(cx + w)) + 1, W)
    y0, y1 = max(int(cy - h), 0), min(int(np.ceil(cy + h)) + 1, H)
    xs = np.arange(x0, x1) + 0.5
    ys = np.arange(y0, y1) + 0.5
    blob = np.exp(-((ys[:, None] - cy) ** 2) / (2 * sy * sy) - ((xs[None, :] - cx) ** 2) / (2 * sx * sx))
    image[:, y0:y1, x0:x1] += signature[:, None, None] * blob[None]


def generate_scene(config=None, seed=0):
    config = config or DataConfig()
    size = config.image_size
    if config.count_min < 0 or config.count_max < config.count_min:
        raise SceneGenerationError(f"bad count range [{config.count_min}, {config.count_max}]")
    if config.count_max > size * size:
        raise SceneGenerationError(f"{config.count_max} objects cannot be placed in a {size}x{size} image")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(config.count_min, config.count_max + 1))
    boxes = np.zeros((n, 4))
    classes = np.zeros(n, dtype=np.int64)
    for i in range(n):
        long_side = sample_object_size(config, rng, size)
        short_side = long_side * rng.uniform(config.aspect_min, 1.0)
        w, h = (long_side, short_side) if rng.random() < 0.5 else (short_side, long_side)
        cx = rng.uniform(w / 2.0, size - w / 2.0)
        cy = rng.uniform(h / 2.0, size - h / 2.0)
        boxes[i] = (cx, cy, w, h)
        classes[i] = rng.integers(config.num_classes)
    image = 0.1 + config.noise * rng.standard_normal((3, size, size))
    sig = class_signatures(config.num_classes)
    for box, cls in zip(boxes, classes):
        _render(image, box, sig[cls])
    return Scene(image, boxes, classes, int(seed))


def generate_dataset(config, root_seed):
    return [generate_scene(config, stream_seed(root_seed, "data", i)) for i in range(config.scene_count)]


# dataset file -----------------------------------------------------------

_MAGIC = "# scalebridge-dataset v1"


def save_scenes(scenes, path, config=None, embed_images=None):
    """Write scenes as text records; images are embedded or marked for regeneration."""
    config = config or DataConfig()
    embed = config.embed_images if embed_images is None else embed_images
    lines = [_MAGIC, "config " + json.dumps(dataclasses.asdict(config), sort_keys=True), f"count {len(scenes)}"]
    for sc in scenes:
        c, h, w = sc.image.shape
        lines.append(f"scene {sc.seed} {h} {w} {len(sc.boxes)}")
        for box, cls in zip(sc.boxes, sc.classes):
            lines.append(" ".join(repr(float(v)) for v in box) + f" {int(cls)}")
        if embed:
            payload = base64.b64encode(zlib.compress(np.ascontiguousarray(sc.image, dtype="<f8").tobytes())).decode()
            lines.append(f"image b64 {payload}")
        else:
            lines.append("image regenerate")
        lines.append("end")
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


def load_scenes(path):
    """Parse a dataset file; any defect raises before a dataset is returned."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or (len(lines) == 1 and not lines[0].strip()):
        return []
    if lines[0] != _MAGIC:
        raise DatasetParseError("missing dataset header", 1)
    pos = 1

    def take(prefix):
        nonlocal pos
        if pos >= len(lines):
            raise DatasetParseError(f"unexpected end of file, expected {prefix!r}", pos + 1)
        line = lines[pos]
        if not line.startswith(prefix):
            raise DatasetParseError(f"expected {prefix!r}, got {line[:40]!r}", pos + 1)
        pos += 1
        return line[len(prefix):].strip()

    try:
        config = DataConfig(**json.loads(take("config")))
    except (TypeError, ValueError) as exc:
        raise DatasetParseError(f"bad config record: {exc}", pos) from None
    try:
        count = int(take("count"))
    except ValueError:
        raise DatasetParseError("bad scene count", pos) from None

    scenes = []
    for _ in range(count):
        head = take("scene").split()
        if len(head) != 4:
            raise DatasetParseError("scene record needs: seed H W n", pos)
        seed, h, w, n = (int(v) for v in head)
        boxes = np.zeros((n, 4))
        classes = np.zeros(n, dtype=np.int64)
        for i in range(n):
            if pos >= len(lines):
                raise DatasetParseError("unexpected end of file inside a box list", pos + 1)
            parts = lines[pos].split()
            if len(parts) != 5:
                raise DatasetParseError(f"box line needs 5 fields, got {len(parts)}", pos + 1)
            try:
                boxes[i] = [float(v) for v in parts[:4]]
                classes[i] = int(parts[4])
            except ValueError:
                raise DatasetParseError("malformed box line", pos + 1) from None
            pos += 1
        img = take("image").split()
        if img == ["regenerate"]:
            scene = generate_scene(config, seed)
            if scene.image.shape[1:] != (h, w):
                raise DatasetParseError("regenerated image size disagrees with record", pos)
            image = scene.image
        elif len(img) == 2 and img[0] == "b64":
            try:
                raw = zlib.decompress(base64.b64decode(img[1], validate=True))
                image = np.frombuffer(raw, dtype="<f8").reshape(3, h, w).astype(np.float64)
            except Exception:
                raise DatasetParseError("corrupt image payload", pos) from None
        else:
            raise DatasetParseError("bad image record", pos)
        take("end")
        scenes.append(Scene(image, boxes, classes, seed))
    if pos != len(lines):
        raise DatasetParseError("trailing content after the last scene", pos + 1)
    return scenes
