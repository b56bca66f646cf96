import numpy as np
import pytest

from anomlab.detector import (Hyperparams, MlpParams, TrainedModel, detect,
                              forward, forward_batch, init_params, knn_detect,
                              load_model, loss_gradients, prediction_losses,
                              save_model, threshold, train)
from anomlab.errors import KTooLarge, NonFiniteLoss
from anomlab.pipeline import Normalizer, SupervisedBatch

from helpers import draw_safe_params, max_relative_error, numeric_gradients


def toy_batch(n=50, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(0.0, 1.0, n) * scale
    x1 = np.full(n, 1.0)
    y = 0.5 * x0 + 0.2 * scale + rng.normal(0.0, 0.01, n)
    return SupervisedBatch(x=np.column_stack([x0, x1]), y=y,
                           labels=np.zeros(n, dtype=bool))


def test_hyperparams_validation():
    for bad in [dict(learning_rate=0.0), dict(batch_size=0),
                dict(epochs=0), dict(hidden_units=0), dict(alpha=0.0)]:
        with pytest.raises(ValueError):
            Hyperparams(**bad)


def test_forward_hand_computed():
    params = MlpParams(w1=np.array([[1.0, 0.0]]), b1=np.array([0.0]),
                       w2=np.array([2.0]), b2=1.0)
    assert forward(params, (3.0, 5.0)) == 7.0
    # Negative pre-activation is cut off by the relu.
    assert forward(params, (-3.0, 5.0)) == 1.0


def test_forward_batch_matches_scalar_forward():
    rng = np.random.default_rng(1)
    params = draw_safe_params(rng, (0.0, 0.0), hidden=6)
    x = rng.normal(size=(20, 2))
    batch_out = forward_batch(params, x)
    for row, got in zip(x, batch_out):
        assert abs(forward(params, row) - got) < 1e-12


def test_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(10):
        x = rng.normal(size=2)
        y = float(rng.normal())
        params = draw_safe_params(rng, x)
        grads = loss_gradients(params, x, y)
        numeric = numeric_gradients(params, x, y)
        err = max_relative_error(
            (grads.w1, grads.b1, grads.w2, grads.b2), numeric)
        assert err < 1e-4


def test_dead_units_get_zero_gradients():
    params = MlpParams(w1=np.array([[1.0, 0.0], [2.0, 0.0]]),
                       b1=np.array([-10.0, -20.0]),
                       w2=np.array([1.0, 1.0]), b2=0.0)
    grads = loss_gradients(params, (0.5, 0.5), 1.0)
    assert np.all(grads.w1 == 0.0)
    assert np.all(grads.b1 == 0.0)
    assert np.all(grads.w2 == 0.0)
    assert grads.b2 != 0.0


def test_init_params_shapes_and_determinism():
    hp = Hyperparams(hidden_units=5, seed=11)
    params = init_params(hp)
    assert params.w1.shape == (5, 2)
    assert params.b1.shape == (5,)
    assert params.w2.shape == (5,)
    assert np.array_equal(init_params(hp).w1, params.w1)
    assert not np.array_equal(init_params(Hyperparams(hidden_units=5,
                                                      seed=12)).w1, params.w1)


def test_training_is_bitwise_deterministic():
    batch = toy_batch()
    hp = Hyperparams(epochs=3, hidden_units=8, seed=5)
    a = train(batch, hp)
    b = train(batch, hp)
    assert np.array_equal(a.params.w1, b.params.w1)
    assert np.array_equal(a.params.b1, b.params.b1)
    assert np.array_equal(a.params.w2, b.params.w2)
    assert a.params.b2 == b.params.b2
    assert a.per_epoch_mean_loss == b.per_epoch_mean_loss
    c = train(batch, Hyperparams(epochs=3, hidden_units=8, seed=6))
    assert not np.array_equal(a.params.w1, c.params.w1)


def test_training_bookkeeping():
    batch = toy_batch(n=40)
    hp = Hyperparams(learning_rate=0.05, epochs=20, hidden_units=8, seed=2)
    model = train(batch, hp)
    assert len(model.per_epoch_mean_loss) == 20
    assert len(model.last_epoch_losses) == 40
    assert model.mean_last_epoch_loss == model.per_epoch_mean_loss[-1]
    assert model.per_epoch_mean_loss[-1] < model.per_epoch_mean_loss[0]
    assert model.train_wall_time_s > 0


def test_single_step_equals_one_gradient_update():
    hp = Hyperparams(learning_rate=0.01, epochs=1, hidden_units=4, seed=7)
    x, y = (0.3, 1.0), 0.8
    batch = SupervisedBatch(x=np.array([x]), y=np.array([y]),
                            labels=np.zeros(1, dtype=bool))
    before = init_params(hp)
    grads = loss_gradients(before, x, y)
    model = train(batch, hp)
    assert np.max(np.abs(model.params.w1
                         - (before.w1 - 0.01 * grads.w1))) < 1e-12
    assert np.max(np.abs(model.params.b1
                         - (before.b1 - 0.01 * grads.b1))) < 1e-12
    assert np.max(np.abs(model.params.w2
                         - (before.w2 - 0.01 * grads.w2))) < 1e-12
    assert abs(model.params.b2 - (before.b2 - 0.01 * grads.b2)) < 1e-12


def test_batched_mode_also_learns():
    batch = toy_batch(n=40)
    hp = Hyperparams(learning_rate=0.05, epochs=20, hidden_units=8, seed=2,
                     batch_size=8)
    model = train(batch, hp)
    assert len(model.per_epoch_mean_loss) == 20
    assert model.per_epoch_mean_loss[-1] < model.per_epoch_mean_loss[0]


def test_train_rejects_empty_batch():
    empty = SupervisedBatch(x=np.zeros((0, 2)), y=np.zeros(0),
                            labels=np.zeros(0, dtype=bool))
    with pytest.raises(ValueError):
        train(empty, Hyperparams(epochs=1))


def test_divergent_training_raises():
    batch = toy_batch(n=10, scale=1e3)
    hp = Hyperparams(learning_rate=1e6, epochs=5, hidden_units=8, seed=0)
    with np.errstate(over="ignore"), pytest.raises(NonFiniteLoss):
        train(batch, hp)


def test_threshold_scales_the_final_training_loss():
    model = train(toy_batch(n=20), Hyperparams(epochs=2, seed=1))
    assert threshold(model, 1.0) == model.mean_last_epoch_loss
    assert threshold(model, 4.0) == 4.0 * model.mean_last_epoch_loss
    with pytest.raises(ValueError):
        threshold(model, 0.0)


def constant_model(output, mean_loss):
    params = MlpParams(w1=np.zeros((1, 2)), b1=np.zeros(1),
                       w2=np.zeros(1), b2=output)
    return TrainedModel(params=params, hyperparams=Hyperparams(),
                        per_epoch_mean_loss=[mean_loss],
                        last_epoch_losses=np.array([mean_loss]),
                        mean_last_epoch_loss=mean_loss)


def test_detect_flags_strictly_above_threshold():
    # The model predicts 0.5; targets are picked so one loss equals the
    # threshold exactly and must stay unflagged.
    model = constant_model(output=0.5, mean_loss=0.015625)
    batch = SupervisedBatch(x=np.zeros((3, 2)),
                            y=np.array([0.375, 0.5, 0.75]),
                            labels=np.zeros(3, dtype=bool))
    losses = prediction_losses(model, batch)
    assert losses.tolist() == [0.015625, 0.0, 0.0625]
    thr = threshold(model, 1.0)
    assert detect(model, thr, batch).tolist() == [False, False, True]


def test_knn_argument_validation():
    batch = toy_batch(n=10)
    with pytest.raises(ValueError):
        knn_detect(batch, batch, 0)
    with pytest.raises(ValueError):
        knn_detect(batch, batch, 2, quantile=0.0)
    with pytest.raises(KTooLarge):
        knn_detect(batch, batch, 10)
    with pytest.raises(KTooLarge):
        knn_detect(batch, batch, 11)


def test_knn_keeps_inliers_and_flags_a_far_point():
    train_batch = toy_batch(n=30, seed=3)
    clean = knn_detect(train_batch, train_batch, 1)
    assert not clean.any()
    far = SupervisedBatch(x=np.array([[50.0, 50.0]]), y=np.array([50.0]),
                          labels=np.zeros(1, dtype=bool))
    assert knn_detect(train_batch, far, 3).tolist() == [True]


def test_knn_matches_a_direct_computation():
    train_batch = toy_batch(n=12, seed=4)
    val_batch = toy_batch(n=7, seed=5)
    k, quantile = 3, 0.75

    def points(b):
        return np.column_stack([b.x[:, 0], b.x[:, 1], b.y])

    tp, vp = points(train_batch), points(val_batch)
    d_self = np.linalg.norm(tp[:, None, :] - tp[None, :, :], axis=2)
    np.fill_diagonal(d_self, np.inf)
    self_scores = np.sort(d_self, axis=1)[:, :k].mean(axis=1)
    thr = np.quantile(self_scores, quantile)
    d_val = np.linalg.norm(vp[:, None, :] - tp[None, :, :], axis=2)
    expected = np.sort(d_val, axis=1)[:, :k].mean(axis=1) > thr
    got = knn_detect(train_batch, val_batch, k, quantile=quantile)
    assert got.tolist() == expected.tolist()


def test_model_round_trips_through_disk(tmp_path):
    norm = Normalizer(value_min=1.25, value_max=9.75, delta_t_max=0.5)
    model = train(toy_batch(n=30), Hyperparams(epochs=3, seed=8),
                  normalizer=norm)
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert np.array_equal(loaded.params.w1, model.params.w1)
    assert np.array_equal(loaded.params.b1, model.params.b1)
    assert np.array_equal(loaded.params.w2, model.params.w2)
    assert loaded.params.b2 == model.params.b2
    assert loaded.hyperparams == model.hyperparams
    assert loaded.normalizer == norm
    assert loaded.per_epoch_mean_loss == model.per_epoch_mean_loss
    assert np.array_equal(loaded.last_epoch_losses, model.last_epoch_losses)
    assert loaded.mean_last_epoch_loss == model.mean_last_epoch_loss


def test_load_rejects_unknown_format_version(tmp_path):
    model = train(toy_batch(n=5), Hyperparams(epochs=1, seed=0))
    path = tmp_path / "model.json"
    save_model(model, path)
    mangled = path.read_text().replace('"format_version": 1',
                                       '"format_version": 99')
    path.write_text(mangled)
    with pytest.raises(ValueError):
        load_model(path)
