import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scalebridge.config import ExpertsConfig
from scalebridge.errors import ShapeError
from scalebridge.experts import FeaturePyramid, build_registry, extract_features
from scalebridge.numerics import Tensor, functional as F
from scalebridge.numerics.layers import Linear, MultiHeadAttention
from scalebridge.rem import (REM, RoutingStem, activate, base_features, calibrate, fuse, gate, integrate,
                             route)


class _E:
    def __init__(self, eid, category):
        self.id, self.category = eid, category


def _registry(cats):
    return [_E(i, c) for i, c in enumerate(cats)]


# routing and gating ----------------------------------------------------------

def test_routing_scores_on_simplex(rng):
    stem = RoutingStem(6, 8, rng)
    s = route(Tensor(rng.normal(size=(3, 8, 8))), stem).values
    assert s.shape == (6,) and np.all(s >= 0) and abs(s.sum() - 1) < 1e-12


def test_routing_positive_scale_scales_logits(rng):
    stem = RoutingStem(4, 8, rng)
    m = rng.normal(size=(3, 8, 8))
    np.testing.assert_allclose(stem.logits(Tensor(3.0 * m)).data, 3.0 * stem.logits(Tensor(m)).data, atol=1e-12)


def test_zero_gate_is_uniform(rng):
    layer = Linear(3 * 4, 3, zero=True)
    feats = [Tensor(rng.normal(size=(4, 5, 5))) for _ in range(3)]
    np.testing.assert_allclose(gate(feats, layer).data, 1 / 3, atol=1e-15)


def test_gate_shape_mismatch(rng):
    layer = Linear(8, 2, rng)
    with pytest.raises(ShapeError):
        gate([Tensor(np.zeros((4, 5, 5))), Tensor(np.zeros((4, 4, 4)))], layer)


# activation ------------------------------------------------------------------

def test_activation_is_per_category_argmax():
    reg = _registry(["tiny", "tiny", "general", "general", "mix", "mix"])
    s = np.array([0.05, 0.30, 0.10, 0.05, 0.20, 0.30])
    assert activate(s, reg).active == (1, 2, 5)


def test_activation_tie_goes_to_lowest_id():
    reg = _registry(["tiny", "tiny", "general", "general", "mix", "mix"])
    assert activate(np.full(6, 1 / 6), reg).active == (0, 2, 4)


def test_activation_exhaustive_small_grid():
    reg = _registry(["tiny", "general", "tiny", "mix", "general", "mix"])
    levels = (0.0, 0.5, 1.0)
    for s in itertools.product(levels, repeat=6):
        s = np.array(s)
        got = activate(s, reg).active
        expect = []
        for cat in ("tiny", "general", "mix"):
            ids = [e.id for e in reg if e.category == cat]
            expect.append(min(ids, key=lambda i: (-s[i], i)))
        assert got == tuple(sorted(expect))


@given(arrays(np.int64, 6, elements=st.integers(-20, 20)), st.integers(-1000, 1000))
def test_activation_shift_invariance(logits, shift):
    # integer logits keep the shift exact, so ties survive it
    reg = _registry(["tiny", "tiny", "general", "general", "mix", "mix"])
    z = logits.astype(np.float64)
    a = activate(F.softmax(z).data, reg)
    assert len(a) == 3
    assert a == activate(F.softmax(z + shift).data, reg)
    assert a == activate(z, reg)


# fusion --------------------------------------------------------------------

def _pyramids(rng, n, c=4):
    return [FeaturePyramid([Tensor(rng.normal(size=(c, 8, 8))), Tensor(rng.normal(size=(c, 4, 4)))])
            for _ in range(n)]


def test_fusion_identity(rng):
    pyr = _pyramids(rng, 1)[0]
    fused = fuse(np.ones(1), [np.ones(1), np.ones(1)], [calibrate(pyr, 1.0)])
    for a, b in zip(fused.levels, pyr.levels):
        assert np.array_equal(a.data, b.data)


def test_fusion_permutation_invariance(rng):
    pyrs = _pyramids(rng, 3)
    s = rng.uniform(size=3)
    w = [rng.dirichlet(np.ones(3)) for _ in range(2)]
    base = fuse(s, w, pyrs)
    perm = [2, 0, 1]
    moved = fuse(s[perm], [wl[perm] for wl in w], [pyrs[i] for i in perm])
    for a, b in zip(base.levels, moved.levels):
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_fusion_linear_in_alpha(rng):
    pyr = _pyramids(rng, 1)[0]
    one = fuse(np.ones(1), [np.ones(1)] * 2, [calibrate(pyr, 1.0)])
    k = fuse(np.ones(1), [np.ones(1)] * 2, [calibrate(pyr, 2.5)])
    for a, b in zip(one.levels, k.levels):
        np.testing.assert_allclose(b.data, 2.5 * a.data, atol=1e-12)


# integration ---------------------------------------------------------------

def test_integrate_rows_and_shapes(rng):
    attn = MultiHeadAttention(8, 2, rng, out_proj=False)
    fmap = Tensor(rng.normal(size=(8, 4, 4)))
    tokens, out, weights = integrate(FeaturePyramid([fmap]), attn, return_weights=True)
    assert tokens.shape == (16, 8) and out.shape == (8, 4, 4)
    np.testing.assert_allclose(weights.data.sum(axis=-1), 1.0, atol=1e-12)


def test_integrate_single_token_adds_value(rng):
    attn = MultiHeadAttention(4, 2, rng, out_proj=False)
    fmap = Tensor(rng.normal(size=(4, 1, 1)))
    tokens, _ = integrate(fmap, attn)
    x = fmap.data.reshape(1, 4)
    np.testing.assert_allclose(tokens.data, x + x @ attn.v_proj.weight.data.T + attn.v_proj.bias.data, atol=1e-12)


# module --------------------------------------------------------------------

def test_rem_end_to_end(rng):
    cfg = ExpertsConfig(width=4, channels=8)
    reg = build_registry(cfg)
    rem = REM(reg, 8, heads=2, stem_width=4, rng=rng)
    image = rng.uniform(size=(3, 32, 32))
    out = rem(image, reg)
    assert len(out.active) == 3
    assert {reg[i].category for i in out.active.active} == {"tiny", "general", "mix"}
    assert out.final_map.shape == (8, 4, 4)
    for g in out.gates:
        assert abs(g.data.sum() - 1) < 1e-12
    cached = {e.id: extract_features(e, image) for e in reg}
    again = rem(image, reg, features=lambda e: cached[e.id])
    assert again.final_map.data.tobytes() == out.final_map.data.tobytes()


def test_base_features_pool(rng):
    img = rng.normal(size=(3, 16, 16))
    assert base_features(img, 4).shape == (3, 4, 4)
