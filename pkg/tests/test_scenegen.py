import numpy as np
import pytest

from scalebridge.config import DataConfig
from scalebridge.errors import DatasetParseError, SceneGenerationError
from scalebridge.scenegen import (generate_dataset, generate_scene, load_scenes, sample_object_size, save_scenes,
                                  scale_bucket)


def test_scene_invariants():
    cfg = DataConfig()
    for seed in range(20):
        s = generate_scene(cfg, seed)
        n = len(s.boxes)
        assert cfg.count_min <= n <= cfg.count_max
        assert s.image.shape == (3, 128, 128)
        x0 = s.boxes[:, 0] - s.boxes[:, 2] / 2
        x1 = s.boxes[:, 0] + s.boxes[:, 2] / 2
        y0 = s.boxes[:, 1] - s.boxes[:, 3] / 2
        y1 = s.boxes[:, 1] + s.boxes[:, 3] / 2
        assert np.all((x0 >= 0) & (y0 >= 0) & (x1 <= 128) & (y1 <= 128))
        assert np.all((s.classes >= 0) & (s.classes < cfg.num_classes))


def test_scene_is_deterministic():
    assert generate_scene(DataConfig(), 11) == generate_scene(DataConfig(), 11)
    assert generate_scene(DataConfig(), 11) != generate_scene(DataConfig(), 12)


def test_size_statistics():
    cfg = DataConfig()
    rng = np.random.default_rng(0)
    sides = np.array([sample_object_size(cfg, rng, 128) for _ in range(10000)])
    assert 0.84 <= np.mean(sides < 16) <= 0.88
    assert 12.0 <= sides.mean() <= 13.6
    assert sides.min() >= 2.0 and sides.max() <= 96.0


def test_zero_objects_possible():
    cfg = DataConfig(count_min=0, count_max=0)
    s = generate_scene(cfg, 0)
    assert len(s.boxes) == 0 and s.centers.shape == (0, 2)


def test_impossible_requests_raise():
    with pytest.raises(SceneGenerationError):
        generate_scene(DataConfig(count_min=5, count_max=2), 0)
    with pytest.raises(SceneGenerationError):
        sample_object_size(DataConfig(size_min=50.0), np.random.default_rng(0), 32)


def test_bucket_edges():
    assert scale_bucket((0, 0, 8, 8)) == "tiny"
    assert scale_bucket((0, 0, 7.99, 8)) == "very_tiny"
    assert scale_bucket((0, 0, 96, 96)) == "large"
    with pytest.raises(ValueError):
        scale_bucket((0, 0, 0, 4))


@pytest.mark.parametrize("embed", [False, True])
def test_dataset_round_trip(tmp_path, embed):
    cfg = DataConfig(scene_count=4, count_max=6)
    scenes = generate_dataset(cfg, 3)
    save_scenes(scenes, tmp_path / "d.txt", cfg, embed_images=embed)
    assert load_scenes(tmp_path / "d.txt") == scenes


def test_dataset_file_is_byte_stable(tmp_path):
    cfg = DataConfig(scene_count=3, count_max=6)
    save_scenes(generate_dataset(cfg, 1), tmp_path / "a.txt", cfg)
    save_scenes(generate_dataset(cfg, 1), tmp_path / "b.txt", cfg)
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_empty_dataset(tmp_path):
    cfg = DataConfig(scene_count=0)
    save_scenes(generate_dataset(cfg, 0), tmp_path / "e.txt", cfg)
    assert load_scenes(tmp_path / "e.txt") == []


def test_corrupt_file_reports_line(tmp_path):
    cfg = DataConfig(scene_count=2, count_min=2, count_max=3)
    save_scenes(generate_dataset(cfg, 0), tmp_path / "d.txt", cfg)
    lines = (tmp_path / "d.txt").read_text().split("\n")
    lines[4] = "1.0 2.0 oops"
    (tmp_path / "d.txt").write_text("\n".join(lines))
    with pytest.raises(DatasetParseError) as info:
        load_scenes(tmp_path / "d.txt")
    assert info.value.line == 5


def test_truncated_file_rejected(tmp_path):
    cfg = DataConfig(scene_count=2, count_max=3)
    save_scenes(generate_dataset(cfg, 0), tmp_path / "d.txt", cfg)
    text = (tmp_path / "d.txt").read_text()
    (tmp_path / "d.txt").write_text(text[: len(text) // 2])
    with pytest.raises(DatasetParseError):
        load_scenes(tmp_path / "d.txt")
