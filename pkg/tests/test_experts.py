import numpy as np
import pytest

from scalebridge.config import ExpertEntry, ExpertsConfig
from scalebridge.errors import ConfigurationError
from scalebridge.experts import build_registry, category_of, extract_features, zero_expert


def _blob_image():
    img = np.zeros((3, 128, 128))
    rng = np.random.default_rng(3)
    for _ in range(40):
        y, x = rng.integers(4, 124, 2)
        img[:, y - 2:y + 2, x - 2:x + 2] = 1.0
    return img


@pytest.fixture(scope="module")
def registry():
    return build_registry(ExpertsConfig(width=8))


def test_registry_layout(registry):
    assert [e.category for e in registry] == ["tiny", "tiny", "general", "general", "mix", "mix"]
    assert [e.id for e in registry] == list(range(6))
    assert category_of(registry)[4] == "mix"


def test_pyramid_shapes(registry):
    pyr = extract_features(registry[0], np.zeros((3, 64, 64)))
    assert [lvl.shape for lvl in pyr.levels] == [(32, 8, 8), (32, 4, 4), (32, 2, 2)]


def test_level_energy_regression(registry):
    # frozen from the seeded registry on a fixed 40-blob scene
    expected = {0: 5418.640452254349, 2: 3705.1036576479555, 5: 1961.4288443468117}
    img = _blob_image()
    for eid, value in expected.items():
        energy = float((extract_features(registry[eid], img).levels[0].data ** 2).sum())
        assert energy == pytest.approx(value, rel=1e-9)


def test_tiny_expert_favours_small_objects(registry):
    img = _blob_image()
    energy = {e.id: float((extract_features(e, img).levels[0].data ** 2).sum()) for e in registry}
    assert min(energy[0], energy[1]) > max(energy[2], energy[3])


def test_frozen_experts_build_no_graph(registry):
    pyr = extract_features(registry[0], np.ones((3, 32, 32)))
    assert not pyr.levels[0].requires_grad
    assert all(not p.trainable for p in registry[0].params.parameters())


def test_missing_category_is_an_error():
    with pytest.raises(ConfigurationError, match="category mix has no expert"):
        build_registry(ExpertsConfig(mix=0))


def test_explicit_entries():
    reg = build_registry(ExpertsConfig(entries=[ExpertEntry("mix"), ExpertEntry("tiny"), ExpertEntry("general", 4)]))
    assert [e.category for e in reg] == ["mix", "tiny", "general"]


def test_indivisible_image_rejected(registry):
    with pytest.raises(ConfigurationError, match="divisible"):
        extract_features(registry[0], np.zeros((3, 36, 36)))


def test_zero_expert_gives_zero_features():
    expert = zero_expert(build_registry(ExpertsConfig(width=4, channels=8))[2])
    pyr = extract_features(expert, np.random.default_rng(0).normal(size=(3, 32, 32)))
    assert all(np.all(lvl.data == 0.0) for lvl in pyr.levels)


def test_registry_is_deterministic():
    a = build_registry(ExpertsConfig(width=4, channels=8))
    b = build_registry(ExpertsConfig(width=4, channels=8))
    for ea, eb in zip(a, b):
        for pa, pb in zip(ea.params.parameters(), eb.params.parameters()):
            assert pa.data.tobytes() == pb.data.tobytes()
