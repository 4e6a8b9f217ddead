import itertools

import numpy as np
import pytest

from scalebridge.detr import (Assignment, ScaleBridgeModel, hungarian_match, load_checkpoint, save_checkpoint)
from scalebridge.detr.boxes import giou_diff, pairwise_giou
from scalebridge.detr.decoder import inverse_sigmoid, predict
from scalebridge.detr.losses import LossWeights, detection_loss, match_cost
from scalebridge.errors import ConfigurationError
from scalebridge.numerics import Parameter, Tensor, grad_check
from scalebridge.scenegen import generate_scene

from scalebridge.diagnostics import check_composite_loss, micro_config


def brute_force_min(cost):
    n, m = cost.shape
    if n >= m:
        return min(sum(cost[r, c] for c, r in enumerate(rows)) for rows in itertools.permutations(range(n), m))
    return min(sum(cost[r, c] for r, c in enumerate(cols)) for cols in itertools.permutations(range(m), n))


# boxes --------------------------------------------------------------------

def test_giou_hand_cases():
    a = np.array([[0.5, 0.5, 0.2, 0.2]])
    assert pairwise_giou(a, a)[0, 0] == pytest.approx(1.0, abs=1e-12)
    far = np.array([[0.1, 0.1, 0.1, 0.1]])
    other = np.array([[0.4, 0.1, 0.1, 0.1]])
    # disjoint: iou 0, hull 0.4 x 0.1, union 0.02
    assert pairwise_giou(far, other)[0, 0] == pytest.approx(-(0.04 - 0.02) / 0.04, abs=1e-12)


def test_giou_diff_matches_numpy(rng):
    p = rng.uniform(0.2, 0.8, size=(5, 4)) * [1, 1, 0.3, 0.3]
    t = rng.uniform(0.2, 0.8, size=(5, 4)) * [1, 1, 0.3, 0.3]
    np.testing.assert_allclose(giou_diff(Tensor(p), t).data, np.diag(pairwise_giou(p, t)), atol=1e-12)


def test_inverse_sigmoid_round_trip():
    p = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(1 / (1 + np.exp(-inverse_sigmoid(p))), p, atol=1e-12)


# matching -----------------------------------------------------------------

def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n, m = rng.integers(1, 8, size=2)
        cost = rng.uniform(0, 10, size=(n, m))
        a = hungarian_match(cost)
        assert len(a) == min(n, m)
        assert len(set(a.query_indices)) == len(a) and len(set(a.gt_indices)) == len(a)
        got = cost[a.query_indices, a.gt_indices].sum()
        assert got == pytest.approx(brute_force_min(cost), abs=1e-9)


def test_hungarian_identity_and_empty():
    assert hungarian_match(np.eye(3) * -1).pairs == [(0, 0), (1, 1), (2, 2)]
    assert len(hungarian_match(np.zeros((4, 0)))) == 0


def test_more_queries_than_gts():
    cost = np.array([[5.0], [1.0], [3.0]])
    assert hungarian_match(cost).pairs == [(1, 0)]


# loss ---------------------------------------------------------------------

def _softplus(x):
    return np.log1p(np.exp(x))


def test_two_query_one_gt_loss_oracle():
    logits = np.array([[0.5, -1.0], [-0.3, 0.2]])
    boxes = np.array([[0.5, 0.5, 0.2, 0.2], [0.3, 0.6, 0.1, 0.3]])
    gt = np.array([[0.52, 0.48, 0.2, 0.2]])
    w = LossWeights()
    cost = match_cost(logits, boxes, gt, [0], w)
    assignment = hungarian_match(cost)
    assert assignment.pairs == [(0, 0)]
    # query 0 targets class 0; query 1 is background
    cls = _softplus(-0.5) + _softplus(-1.0) + _softplus(-0.3) + _softplus(0.2)
    l1 = 0.02 + 0.02
    inter = 0.18 * 0.18
    union = 0.08 - inter
    giou = inter / union - (0.22 * 0.22 - union) / (0.22 * 0.22)
    expected = 2 * cls + 5 * l1 + 2 * (1 - giou)
    got = detection_loss(logits, boxes, gt, [0], assignment, w)
    assert float(got.total.data) == pytest.approx(expected, abs=1e-12)


def test_no_gt_loss_is_background_only():
    logits = np.array([[0.0, 0.0]])
    got = detection_loss(logits, np.full((1, 4), 0.5), np.zeros((0, 4)), [], Assignment([]), LossWeights())
    assert float(got.total.data) == pytest.approx(2 * 2 * np.log(2.0), abs=1e-12)


def test_detection_loss_gradient(rng):
    logits = Parameter(rng.normal(size=(3, 2)))
    raw = Parameter(rng.normal(size=(3, 4)))
    gt = np.array([[0.4, 0.5, 0.2, 0.3], [0.7, 0.2, 0.1, 0.1]])
    from scalebridge.numerics import functional as F
    boxes = lambda: F.sigmoid(raw)
    a = hungarian_match(match_cost(logits.data, boxes().data, gt, [1, 0], LossWeights()))
    loss = lambda: detection_loss(logits, boxes(), gt, [1, 0], a, LossWeights()).total
    assert grad_check(loss, [logits, raw]) < 1e-6


def test_predict_threshold():
    dets = predict(np.array([[2.0, -1.0], [-3.0, -2.0]]), np.full((2, 4), 0.5), score_threshold=0.3)
    assert len(dets) == 1 and dets[0].label == 0


# model --------------------------------------------------------------------

@pytest.fixture(scope="module")
def micro():
    cfg = micro_config()
    model = ScaleBridgeModel(cfg)
    scene = generate_scene(cfg.data, 5)
    return cfg, model, scene


def test_forward_shapes(micro):
    cfg, model, scene = micro
    out = model.forward(scene, rng=np.random.default_rng(0))
    nq = out.plan.num_queries
    assert out.class_logits.shape == (nq, cfg.data.num_classes)
    assert out.boxes.shape == (nq, 4)
    assert np.all((out.boxes.data > 0) & (out.boxes.data < 1))
    assert len(out.plan.assignment) == min(nq, len(scene.boxes))
    assert np.isfinite(float(out.total.data))


def test_plan_replay_is_exact(micro):
    _, model, scene = micro
    first = model.forward(scene, rng=np.random.default_rng(3))
    again = model.forward(scene, plan=first.plan)
    assert float(first.total.data) == float(again.total.data)


def test_full_loss_gradient_and_frozen_experts():
    report = check_composite_loss(eps=1e-5)
    assert report.max_rel_error < 1e-4
    assert report.frozen_zero and report.passed
    assert "experts" not in report.worst_param


def test_trainable_set_excludes_experts(micro):
    _, model, _ = micro
    names = [n for n, _ in model.trainable_parameters()]
    assert names and all(not n.startswith("experts") for n in names)
    assert any(n.startswith("experts") for n, _ in model.named_parameters())


@pytest.mark.parametrize("rem,dgq", [(False, False), (True, False), (False, True)])
def test_variants_run(rem, dgq):
    cfg = micro_config()
    cfg.model.use_rem, cfg.model.use_dgq = rem, dgq
    out = ScaleBridgeModel(cfg).forward(generate_scene(cfg.data, 2), rng=np.random.default_rng(0))
    assert (out.density_loss is None) == (not dgq)
    assert np.isfinite(float(out.total.data))


def test_checkpoint_round_trip(tmp_path, micro):
    cfg, model, _ = micro
    save_checkpoint(model, tmp_path / "m.npz", epoch=4)
    other = ScaleBridgeModel(cfg)
    for _, p in other.named_parameters():
        p.data[...] = 0.0
    assert load_checkpoint(other, tmp_path / "m.npz") == 4
    for (n, a), (_, b) in zip(model.named_parameters(), other.named_parameters()):
        assert a.data.tobytes() == b.data.tobytes(), n


def test_checkpoint_shape_mismatch_names_tensor(tmp_path, micro):
    cfg, model, _ = micro
    save_checkpoint(model, tmp_path / "m.npz")
    wider = micro_config()
    wider.experts.channels = 12
    with pytest.raises(ConfigurationError, match="tensor '"):
        load_checkpoint(ScaleBridgeModel(wider), tmp_path / "m.npz")
