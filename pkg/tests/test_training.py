import math

import numpy as np
import pytest

from affinitynet import data, layers
from affinitynet import ndcore as nd
from affinitynet.errors import Diverged, EmptyMask, LabelOutOfRange, NoEvents
from affinitynet.training import (TrainConfig, cox_nll, masked_cross_entropy, optimizer_step,
                                  partial_batch_iter, predict, train)


def cox_oracle(risks, time, event):
    """Breslow partial likelihood by explicit risk-set enumeration."""
    total, events = 0.0, 0
    for i in range(len(risks)):
        if not event[i]:
            continue
        denom = sum(math.exp(risks[j]) for j in range(len(risks)) if time[j] >= time[i])
        total += risks[i] - math.log(denom)
        events += 1
    return -total / events


def test_cross_entropy_uniform_is_log_c():
    loss = masked_cross_entropy(nd.constant(np.zeros((3, 4))), [0, 1, 2], [False, True, False])
    assert loss.value[0, 0] == pytest.approx(math.log(4), abs=1e-15)


def test_cross_entropy_confident_limit():
    logits = np.array([[60.0, 0.0, 0.0]])
    assert masked_cross_entropy(nd.constant(logits), [0], [True]).value[0, 0] < 1e-25


def test_cross_entropy_masked_rows_get_zero_gradient():
    logits = nd.parameter(np.random.default_rng(0).normal(size=(5, 3)))
    mask = np.array([True, False, True, False, False])
    nd.backward(masked_cross_entropy(logits, [0, 1, 2, 0, 1], mask))
    assert (logits.grad[~mask] == 0).all()
    assert (logits.grad[mask] != 0).any()


def test_cross_entropy_errors():
    with pytest.raises(EmptyMask):
        masked_cross_entropy(nd.constant(np.zeros((2, 2))), [0, 1], [False, False])
    with pytest.raises(LabelOutOfRange):
        masked_cross_entropy(nd.constant(np.zeros((2, 2))), [0, 2], [True, True])


def test_cox_two_subjects_is_log_two():
    assert cox_nll(nd.constant([[0.3], [0.3]]), [1.0, 2.0], [True, False]).value[0, 0] == \
        pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("n", [3, 7, 20])
def test_cox_equal_risks_single_earliest_event_is_log_n(n):
    time = np.arange(1.0, n + 1)
    event = np.zeros(n, dtype=bool)
    event[0] = True
    assert cox_nll(nd.constant(np.zeros((n, 1))), time, event).value[0, 0] == pytest.approx(math.log(n))


def test_cox_four_subjects_with_ties_matches_oracle():
    r = [0.5, -1.0, 2.0, 0.1]
    t = [2.0, 2.0, 1.0, 3.0]
    e = [True, True, False, True]
    assert cox_nll(nd.constant(np.array(r)[:, None]), t, e).value[0, 0] == \
        pytest.approx(cox_oracle(r, t, e), abs=1e-12)


def test_cox_stable_for_large_risks():
    r = np.array([[800.0], [-800.0], [799.0]])
    val = cox_nll(nd.constant(r), [1.0, 2.0, 3.0], [True, True, False]).value[0, 0]
    assert np.isfinite(val)


def test_cox_needs_events():
    with pytest.raises(NoEvents):
        cox_nll(nd.constant(np.zeros((3, 1))), [1, 2, 3], [False] * 3)


def test_sgd_step():
    p = {"w": np.array([[0.0]])}
    optimizer_step(p, {"w": np.array([[1.0]])}, {}, TrainConfig(learning_rate=0.1, optimizer="sgd"))
    assert p["w"][0, 0] == pytest.approx(-0.1, abs=1e-15)


@pytest.mark.parametrize("g", [3.0, -0.02])
def test_adam_first_step_moves_by_lr(g):
    p = {"w": np.array([[1.0]])}
    optimizer_step(p, {"w": np.array([[g]])}, {}, TrainConfig(learning_rate=1e-3))
    assert p["w"][0, 0] - 1.0 == pytest.approx(-1e-3 * np.sign(g), rel=1e-5)


def test_zero_grad_is_fixed_point():
    p = {"w": np.array([[2.5, -1.0]])}
    optimizer_step(p, {"w": np.zeros((1, 2))}, {}, TrainConfig(optimizer="sgd"))
    assert p["w"].tolist() == [[2.5, -1.0]]


def test_lr_scale_by_suffix():
    cfg = TrainConfig(learning_rate=0.01, lr_scale={"logits": 10, "2.W": 0.5})
    assert cfg.lr_for("0.logits") == pytest.approx(0.1)
    assert cfg.lr_for("2.W") == pytest.approx(0.005)
    assert cfg.lr_for("1.W") == 0.01


def test_partial_batches_partition_rows():
    batches = partial_batch_iter(23, 5, seed=3, epoch=2)
    flat = np.concatenate(batches)
    assert sorted(flat.tolist()) == list(range(23))
    assert max(len(b) for b in batches) <= 5
    assert [b.tolist() for b in partial_batch_iter(23, 5, 3, 2)] == [b.tolist() for b in batches]
    assert len(partial_batch_iter(4, 10)) == 1


def small_problem(seed=0):
    d = data.gen_synthetic(15, seed)
    train_mask, test_mask = data.split(d, data.SplitPlan(0.2, True, seed))
    return d, train_mask, test_mask


def test_batch_of_one_pools_only_self():
    d, tr, te = small_problem()
    spec = layers.affinitynet_spec(42, 4, hidden=6, pooling_hidden=True)
    params = layers.init_params(spec, 0)
    X = d.features[:5]
    per_row = predict(spec, params, X, batch_size=1)
    for i in range(5):
        solo = layers.model_forward(spec, params, X[i:i + 1]).outputs.value
        np.testing.assert_array_equal(per_row[i], solo[0])


def test_full_batch_size_equals_full_mode():
    d, tr, te = small_problem()
    spec = layers.affinitynet_spec(42, 4, hidden=6)
    cfg = TrainConfig(epochs=3, seed=1)
    _, h1 = train(spec, d, cfg, tr, te)
    _, h2 = train(spec, d, TrainConfig(epochs=3, seed=1, batch_size=10_000), tr, te)
    assert h1.rows() == h2.rows()


def test_training_is_deterministic(tmp_path):
    d, tr, te = small_problem()
    spec = layers.affinitynet_spec(42, 4, hidden=6, pooling_hidden=True)
    cfg = TrainConfig(epochs=5, seed=2, batch_size=20)
    p1, h1 = train(spec, d, cfg, tr, te)
    p2, h2 = train(spec, d, cfg, tr, te)
    h1.write_csv(tmp_path / "a.csv")
    h2.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_training_reduces_loss_and_frozen_stays_put():
    d, tr, te = small_problem()
    spec = layers.affinitynet_spec(42, 4, hidden=8)
    params, hist = train(spec, d, TrainConfig(epochs=30, learning_rate=0.01, seed=0, frozen=("0.logits",)),
                         tr, te)
    assert hist.train_loss[-1] < hist.train_loss[0]
    assert (params["0.logits"] == 0).all()


def test_feature_weights_stay_on_simplex_during_training():
    d, tr, te = small_problem()
    spec = layers.affinitynet_spec(42, 4, hidden=8)
    params, _ = train(spec, d, TrainConfig(epochs=10, learning_rate=0.05), tr, te)
    w = layers.feature_weights(params)
    assert abs(w.sum() - 1) <= 1e-12 and (w > 0).all()


def test_k0_all_labelled_matches_baseline_trajectory():
    d, _, _ = small_problem()
    everyone = np.ones(d.n, dtype=bool)
    pooled = layers.ModelSpec(42, [layers.KnnPooling(7, k=0), layers.LinearHead(4)])
    plain = layers.neuralnet_spec(42, 4, hidden=7)
    cfg = TrainConfig(epochs=10, learning_rate=0.01, seed=4)
    _, h1 = train(pooled, d, cfg, everyone)
    _, h2 = train(plain, d, cfg, everyone)
    assert h1.train_loss == h2.train_loss


def test_divergence_raises_with_history():
    d, tr, te = small_problem()
    spec = layers.neuralnet_spec(42, 4, hidden=8)
    with pytest.raises(Diverged) as info, np.errstate(over="ignore", invalid="ignore"):
        train(spec, d, TrainConfig(epochs=50, learning_rate=1e200, optimizer="sgd"), tr, te)
    assert info.value.history is not None


def test_cox_training_runs_and_scores_concordance():
    d = data.gen_survival_surrogate(60, 0)
    tr, va, te = data.three_way_split(d.n, 0.5, 0.2, 0)
    spec = layers.affinitynet_spec(42, 1, hidden=6, head="cox")
    _, hist = train(spec, d, TrainConfig(epochs=5, seed=0), tr, te)
    assert 0.0 <= hist.test_acc[-1] <= 1.0


def test_history_csv_columns(tmp_path):
    d, tr, te = small_problem()
    _, hist = train(layers.neuralnet_spec(42, 4, hidden=4), d, TrainConfig(epochs=3, eval_every=2), tr, te)
    hist.write_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,test_acc"
    assert len(lines) == 4
    assert lines[2].endswith(",")  # epoch 1 skipped the test evaluation
    assert float(lines[1].split(",")[1]) == hist.train_loss[0]
