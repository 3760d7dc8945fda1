import dataclasses
import math

import numpy as np
import pytest

from conftest import make_dataset
from vbspower import mlp
from vbspower.core import ModelFile, ModelKind, Scheduler, model_from_json, model_to_json
from vbspower.datagen import GenConfig, generate, get_profile
from vbspower.mlp import TrainConfig, TrainingError


@pytest.fixture(scope="module")
def default_500():
    # default campaigns carry Gaussian noise only
    prof = dataclasses.replace(get_profile("Server2"), outlier_prob=0.0)
    return generate(GenConfig(prof, Scheduler.DEFAULT, 500, seed=0))


@pytest.fixture(scope="module")
def trained(default_500):
    return mlp.train(default_500, TrainConfig(seed=3))


def random_model(seed, ds):
    rng = np.random.default_rng(seed)
    mean, std = mlp.norm_stats(ds.features())
    return mlp.init_model(mean, std, rng=rng, output_bias=float(ds.power_w.mean()))


def test_zero_network_outputs_zero():
    z = mlp.zero_model()
    assert mlp.predict(z, 0.5, 12.0, 7) == 0.0
    assert np.all(mlp.predict(z, np.linspace(0, 1, 5), 3.0, 1) == 0.0)


def test_forward_shapes(default_500):
    m = random_model(0, default_500)
    _, acts = mlp._forward(m.params(), mlp.normalize(m, default_500.features()[:7]))
    assert [a.shape[1] for a in acts] == list(mlp.LAYER_DIMS)
    assert all(a.shape[0] == 7 for a in acts)


def test_trained_output_nonnegative(trained):
    model, _ = trained
    a, c, m = np.meshgrid(np.linspace(0, 1, 6), np.linspace(0, 40, 9), np.arange(0, 29, 4), indexing="ij")
    assert np.all(mlp.predict(model, a, c, m) >= 0.0)


def test_training_fits_to_noise_floor(trained, default_500):
    model, trace = trained
    rmse = math.sqrt(np.mean((mlp.predict_features(model, default_500.features()) - default_500.power_w) ** 2))
    assert rmse <= 3 * get_profile("Server2").noise_sigma_w
    assert len(trace.epoch_loss) == 220
    assert all(math.isfinite(v) for v in trace.epoch_loss)


def test_training_bitwise_deterministic(trained, default_500):
    again, trace = mlp.train(default_500, TrainConfig(seed=3))
    assert again == trained[0]
    assert trace.epoch_loss == trained[1].epoch_loss


def test_l1_activity_shrinks_hidden_activation():
    ds = generate(GenConfig(get_profile("Server2"), Scheduler.DEFAULT, 200, seed=1))
    plain, _ = mlp.train(ds, TrainConfig(epochs=30, l1_activity_coeff=0.0, seed=2))
    heavy, _ = mlp.train(ds, TrainConfig(epochs=30, l1_activity_coeff=1.0, seed=2))
    assert mlp.mean_hidden_activation(heavy, ds) < mlp.mean_hidden_activation(plain, ds)


@pytest.mark.parametrize(
    "kw", [dict(epochs=0), dict(learning_rate=0.0), dict(batch_size=0), dict(l1_activity_coeff=-1.0)]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


@pytest.mark.parametrize("n", [1, 32, 33, 100])
def test_one_epoch_step_count(n):
    ds = generate(GenConfig(get_profile("NUC1"), Scheduler.DEFAULT, n, seed=0))
    _, trace = mlp.train(ds, TrainConfig(epochs=1))
    assert trace.n_steps == math.ceil(n / 32)


def test_empty_dataset_rejected():
    from vbspower.core import Dataset

    with pytest.raises(TrainingError):
        mlp.train(Dataset((), "P", Scheduler.DEFAULT))


def test_fine_tune_zero_step_size_keeps_weights(trained, default_500):
    model, _ = trained
    tuned, _ = mlp.fine_tune(model, default_500, TrainConfig(epochs=1, learning_rate=1e-300))
    for w0, w1 in zip(model.params(), tuned.params()):
        assert np.array_equal(w0, w1)
    assert np.array_equal(tuned.norm_mean, model.norm_mean)


def test_fine_tune_keeps_normalization_and_is_deterministic(trained):
    model, _ = trained
    custom = generate(GenConfig(get_profile("Server2"), Scheduler.CUSTOM, 300, seed=4))
    t1, _ = mlp.fine_tune(model, custom, TrainConfig(epochs=5, seed=1))
    t2, _ = mlp.fine_tune(model, custom, TrainConfig(epochs=5, seed=1))
    assert t1 == t2
    assert np.array_equal(t1.norm_std, model.norm_std)
    assert not np.array_equal(t1.weights[0], model.weights[0])


def test_fine_tune_shape_mismatch(trained, default_500):
    with pytest.raises(TrainingError):
        mlp.fine_tune(trained[0], default_500, TrainConfig(layer_dims=(3, 8, 1)))


def test_snr_shift_invariance():
    ds = generate(GenConfig(get_profile("NUC2"), Scheduler.DEFAULT, 120, seed=6))
    shifted = make_dataset(ds.airtime, ds.snr_db + 7.5, ds.mcs, ds.power_w, Scheduler.DEFAULT)
    cfg = TrainConfig(epochs=15, seed=8)
    _, t1 = mlp.train(ds, cfg)
    _, t2 = mlp.train(shifted, cfg)
    np.testing.assert_allclose(t1.epoch_loss, t2.epoch_loss, rtol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_check_random_model(seed, default_500):
    m = random_model(seed, default_500)
    batch = default_500.subset(range(8 * seed, 8 * seed + 8))
    res = mlp.gradient_check(m, batch)
    assert res.max_rel_error <= 1e-4
    total = sum(p.size for p in m.params())
    assert res.n_checked + res.n_excluded == total
    assert res.n_excluded < 0.01 * total


def test_gradient_check_zero_network():
    z = mlp.zero_model()
    batch = make_dataset([0.5, 0.2], [10.0, 3.0], [4, 1], [20.0, 21.0])
    _, grads = mlp._loss_and_grads(z.params(), mlp.normalize(z, batch.features()), batch.power_w, 1e-4)
    # every pre-activation is exactly 0, so no weight feeding a ReLU moves the loss
    for g in grads[0::2]:
        assert np.all(g == 0.0)
    res = mlp.gradient_check(z, batch)
    assert res.n_checked + res.n_excluded == sum(p.size for p in z.params())


def test_model_file_round_trip(trained):
    model, _ = trained
    f = ModelFile(ModelKind.MLP, model, "Server2", "A", 3, "t")
    back = model_from_json(model_to_json(f))
    assert back.payload == model
    x = np.array([[0.3, 12.5, 9.0]])
    assert mlp.predict_features(back.payload, x)[0] == mlp.predict_features(model, x)[0]


def test_train_config_round_trip():
    cfg = dataclasses.replace(TrainConfig(), seed=5, epochs=7)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
