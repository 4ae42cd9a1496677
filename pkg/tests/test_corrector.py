import numpy as np
import pytest

from modcl.corrector import (
    DenseNet,
    SemiSupervisedSet,
    TrainConfig,
    blender_forward,
    corrector_forward,
    init_models,
    init_net,
    load_checkpoint,
    save_checkpoint,
    stage1_loss_and_grads,
    stage2_loss_and_grads,
    train_semisupervised,
    train_stage2,
)
from modcl.errors import InputError, LabelSpaceMismatch, ParseError
from modcl.fuzzy import bce, loss_s1
from modcl.requirements import requirement_set

from helpers import generic_ls


def random_rs(rng, n):
    clauses = []
    for _ in range(int(rng.integers(1, 3 * n))):
        k = int(rng.integers(1, min(4, n) + 1))
        vars_ = rng.choice(n, size=k, replace=False)
        clauses.append([int(v + 1) * int(rng.choice([-1, 1])) for v in vars_])
    return requirement_set(generic_ls(n), clauses, check=False)


def numeric_grad(loss_fn, params, k, h=1e-6):
    out = np.zeros_like(params[k])
    for idx in np.ndindex(out.shape):
        vals = []
        for s in (1.0, -1.0):
            ps = [a.copy() for a in params]
            ps[k][idx] += s * h
            vals.append(loss_fn(ps))
        out[idx] = (vals[0] - vals[1]) / (2 * h)
    return out


def assert_close_grad(num, ana, rtol=1e-4, floor=1e-6):
    err = np.linalg.norm(num - ana) / max(np.linalg.norm(num), np.linalg.norm(ana), floor)
    assert err < rtol, err


def _instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 11))
    h = int(rng.integers(1, 17))
    b = int(rng.integers(1, 6))
    rs = random_rs(rng, n)
    c = init_net("corrector", n, h, rng, out_scale=0.5)
    c = c.with_params((c.w1, rng.normal(0, 0.1, h), c.w2, rng.normal(0, 0.1, n)))
    bl = init_net("blender", n, h, rng, out_scale=0.5)
    p = rng.uniform(0.05, 0.95, (b, n))
    y = (rng.random((b, n)) < 0.5).astype(float)
    return rs, c, bl, p, y


@pytest.mark.parametrize("seed", range(20))
def test_stage1_gradients(seed):
    rs, c, _, p, _ = _instance(seed)
    _, grads = stage1_loss_and_grads(c, p, rs)
    for k in range(4):
        num = numeric_grad(lambda ps: stage1_loss_and_grads(c.with_params(ps), p, rs)[0], c.params(), k)
        assert_close_grad(num, grads[k])


@pytest.mark.parametrize("seed", range(20))
def test_stage2_gradients(seed):
    rs, c, bl, p, y = _instance(seed)
    _, cg, bg = stage2_loss_and_grads(c, bl, p, y, rs, 10.0)
    for k in range(4):
        num = numeric_grad(lambda ps: stage2_loss_and_grads(c.with_params(ps), bl, p, y, rs, 10.0)[0], c.params(), k)
        assert_close_grad(num, cg[k])
        num = numeric_grad(lambda ps: stage2_loss_and_grads(c, bl.with_params(ps), p, y, rs, 10.0)[0], bl.params(), k)
        assert_close_grad(num, bg[k])


def test_stage2_value_matches_losses():
    rs, c, bl, p, y = _instance(3)
    value, _, _ = stage2_loss_and_grads(c, bl, p, y, rs, 10.0)
    yc = corrector_forward(c, p)
    yb = blender_forward(bl, p, yc)
    expected = np.mean([10 * loss_s1(rs, yc[i]).value + bce(yc[i], y[i])[0] + bce(yb[i], y[i])[0] for i in range(len(p))])
    assert value == pytest.approx(expected)


def test_zero_output_layer_is_identity(rng):
    c = init_net("corrector", 5, 8, rng, out_scale=0.0)
    b = init_net("blender", 5, 8, rng, out_scale=0.0)
    p = rng.uniform(0.01, 0.99, (4, 5))
    np.testing.assert_allclose(corrector_forward(c, p), p, rtol=1e-12)
    np.testing.assert_allclose(blender_forward(b, p, p), p, rtol=1e-12)
    assert corrector_forward(c, p[0]).shape == (5,)


def test_net_validation(rng):
    c = init_net("corrector", 3, 4, rng)
    with pytest.raises(InputError):
        DenseNet("blender", c.w1, c.b1, c.w2, c.b2)
    with pytest.raises(InputError):
        DenseNet("other", c.w1, c.b1, c.w2, c.b2)
    with pytest.raises(InputError):
        c.with_params((c.w1 * np.nan, c.b1, c.w2, c.b2))
    with pytest.raises(LabelSpaceMismatch):
        corrector_forward(c, np.zeros(4))


def test_config_validation():
    with pytest.raises(InputError):
        TrainConfig(learning_rate=0)
    with pytest.raises(InputError):
        TrainConfig(constraint_weight=-1)


def _toy_data(seed=0, m=40, n=4):
    rng = np.random.default_rng(seed)
    labels = (rng.random((m, n)) < 0.3).astype(float)
    labels[:, 0] = 1.0
    scores = np.clip(labels + rng.normal(0, 0.2, labels.shape), 0, 1)
    rs = requirement_set(generic_ls(n), [[1], [-2, -3]], check=False)
    return rs, SemiSupervisedSet(scores[: m // 2], labels[: m // 2], scores[m // 2:])


def test_training_deterministic():
    rs, data = _toy_data()
    cfg = TrainConfig(epochs=3, hidden=8, batch_size1=7, batch_size2=5, seed=9)
    a = train_semisupervised(data, rs, cfg)
    b = train_semisupervised(data, rs, cfg)
    assert save_checkpoint(a[:2]) == save_checkpoint(b[:2])
    assert [t.loss for t in a[2]] == [t.loss for t in b[2]]
    # trace: ceil(20/7)=3 stage-1 batches then ceil(20/5)=4 stage-2 batches per epoch
    assert [(t.epoch, t.stage) for t in a[2][:7]] == [(0, 1)] * 3 + [(0, 2)] * 4


def test_training_golden():
    rs, data = _toy_data(42)
    c, b, trace = train_semisupervised(data, rs, TrainConfig(epochs=5, hidden=8, seed=42))
    y = corrector_forward(c, data.unlabeled[:2])
    np.testing.assert_allclose(y, GOLDEN_Y, rtol=1e-9, atol=1e-12)
    assert trace[-1].loss == pytest.approx(GOLDEN_LAST_LOSS, rel=1e-9)


def test_training_reduces_constraint_loss():
    rs, data = _toy_data(1, m=200)
    cfg = TrainConfig(epochs=30, hidden=16, learning_rate=0.5, seed=1)
    c0, _ = init_models(4, cfg)
    before = stage1_loss_and_grads(c0, data.unlabeled, rs)[0]
    c, _, _ = train_semisupervised(data, rs, cfg)
    after = stage1_loss_and_grads(c, data.unlabeled, rs)[0]
    assert after < 0.5 * before


def test_zero_weight_without_unlabeled_is_pure_bce():
    rs, data = _toy_data(2)
    empty = SemiSupervisedSet(data.labeled, data.labels, np.zeros((0, 4)))
    cfg = TrainConfig(epochs=2, hidden=6, constraint_weight=0.0, seed=3)
    c, b, _ = train_semisupervised(empty, rs, cfg, require_unlabeled=False)
    # the same run with no requirements at all must be identical
    none = requirement_set(generic_ls(4), [], check=False)
    c2, b2, _ = train_semisupervised(empty, none, cfg, require_unlabeled=False)
    assert save_checkpoint([c, b]) == save_checkpoint([c2, b2])
    with pytest.raises(InputError):
        train_semisupervised(empty, rs, cfg)


def test_stage2_rejects_empty():
    rs, data = _toy_data()
    c, b = init_models(4, TrainConfig(hidden=4))
    with pytest.raises(InputError):
        train_stage2(c, b, np.zeros((0, 4)), np.zeros((0, 4)), rs, TrainConfig())


def test_checkpoint_round_trip(rng):
    c = init_net("corrector", 3, 5, rng)
    b = init_net("blender", 3, 5, rng)
    blob = save_checkpoint([c, b])
    assert blob[:8] == b"MODCLCKP"
    assert len(blob) == 16 + 2 * 13 + 8 * (5 * 3 + 5 + 3 * 5 + 3) + 8 * (5 * 6 + 5 + 3 * 5 + 3)
    c2, b2 = load_checkpoint(blob)
    assert (c2.kind, b2.kind) == ("corrector", "blender")
    for x, y in zip(c.params() + b.params(), c2.params() + b2.params()):
        assert np.array_equal(x, y)
    assert save_checkpoint([c2, b2]) == blob


@pytest.mark.parametrize("mutate", [
    lambda b: b[:-1],
    lambda b: b + b"\0",
    lambda b: b"XXXXXXXX" + b[8:],
    lambda b: b[:8] + b"\x02" + b[9:],
    lambda b: b[:4],
])
def test_checkpoint_rejects(rng, mutate):
    blob = save_checkpoint([init_net("corrector", 2, 3, rng)])
    with pytest.raises(ParseError):
        load_checkpoint(mutate(blob))


# regression values for the seeded toy run above
GOLDEN_Y = np.array([
    [0.9699896070010305, 9.325586560193777e-07, 9.610552492156366e-07, 0.8232964654838362],
    [0.9826433017243241, 0.6319019206169038, 9.593361865456451e-07, 0.4268832236618012],
])
GOLDEN_LAST_LOSS = 0.8604405073808922
