from pathlib import Path

import numpy as np
import pytest

from scalebridge.config import RunConfig, dumps, loads, rng_stream, stream_seed
from scalebridge.errors import ConfigurationError


def test_empty_config_is_runnable_default():
    cfg = loads("")
    assert cfg == RunConfig()
    assert cfg.train.batch == 1 and cfg.data.scene_count == 200
    assert cfg.dgq.tier_scale == pytest.approx(1 / 30)


def test_unknown_key_and_section_rejected():
    with pytest.raises(ConfigurationError, match="lrr"):
        loads("[train]\nlrr = 0.1\n")
    with pytest.raises(ConfigurationError, match="trian"):
        loads("[trian]\nlr = 0.1\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigurationError):
        loads("[train]\nepochs = many\n")


def test_fraction_values():
    assert loads("[dgq]\ntier_scale = 1/30\n").dgq.tier_scale == 1 / 30


def test_round_trip():
    cfg = loads("[train]\nlr = 0.003\nseed = 4\n[model]\nuse_rem = false\n[expert.0]\ncategory = tiny\n"
                "[expert.1]\ncategory = general\nwidth = 6\n[expert.2]\ncategory = mix\n")
    assert loads(dumps(cfg)) == cfg
    assert [e.width for e in cfg.experts.entries] == [cfg.experts.width, 6, cfg.experts.width]


def test_expert_section_needs_category():
    with pytest.raises(ConfigurationError):
        loads("[expert.0]\nwidth = 3\n")


def test_named_streams_are_independent_and_stable():
    a = rng_stream(0, "data", 1).integers(0, 1 << 30, 4)
    b = rng_stream(0, "data", 1).integers(0, 1 << 30, 4)
    c = rng_stream(0, "sampling", 1).integers(0, 1 << 30, 4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert stream_seed(3, "data", 0) == stream_seed(3, "data", 0)


def test_shipped_default_config_matches_dataclass_defaults():
    path = Path(__file__).resolve().parents[1] / "configs" / "default.ini"
    assert loads(path.read_text()) == RunConfig()
