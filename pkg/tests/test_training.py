"""Tests for the mini-batch trainer, data splitting and history files."""

import math

import numpy as np
import pytest

from mdlvae.autoencoder import (
    build_ae,
    build_vae,
    forward_ae,
    get_flat_params,
)
from mdlvae.errors import (
    ConfigError,
    DomainError,
    ParseError,
    ShapeError,
    TrainingError,
)
from mdlvae.numerics import Rng
from mdlvae.training import (
    HISTORY_HEADER,
    EpochRecord,
    TrainConfig,
    TrainingHistory,
    split_dataset,
    split_indices,
    train,
)


def low_rank_batch(n=60, d=6, seed=0):
    rng = Rng(seed)
    factors = rng.normal(n * 2).reshape(n, 2)
    w = rng.normal(2 * d).reshape(2, d)
    return factors @ w + 0.05 * rng.normal(n * d).reshape(n, d)


def quick_config(**overrides):
    base = dict(epochs=5, batch_size=16, learning_rate=1e-2, seed=0)
    base.update(overrides)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------


def test_train_config_defaults():
    cfg = TrainConfig()
    assert cfg.epochs == 100
    assert cfg.batch_size == 32
    assert cfg.learning_rate == 1e-3
    assert cfg.optimizer == "adam"
    assert cfg.val_fraction == 0.2
    assert cfg.beta is None


@pytest.mark.parametrize(
    "bad",
    [
        dict(epochs=-1),
        dict(batch_size=0),
        dict(learning_rate=0.0),
        dict(recon_kind="huber"),
        dict(optimizer="rmsprop"),
        dict(val_fraction=0.0),
        dict(val_fraction=1.0),
        dict(adam_beta1=1.0),
    ],
)
def test_train_config_rejects_bad_values(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def test_split_indices_sizes_and_disjointness():
    train_idx, val_idx = split_indices(10, 0.2, seed=0)
    assert len(val_idx) == 2 and len(train_idx) == 8
    assert sorted([*train_idx.tolist(), *val_idx.tolist()]) == list(range(10))


def test_split_indices_rounding():
    # val count is round(n * fraction): 0.25 * 10 = 2.5 -> 3
    train_idx, val_idx = split_indices(10, 0.25, seed=1)
    assert len(val_idx) == 3 and len(train_idx) == 7


def test_split_indices_deterministic_per_seed():
    a = split_indices(30, 0.2, seed=5)
    b = split_indices(30, 0.2, seed=5)
    c = split_indices(30, 0.2, seed=6)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])


def test_split_indices_rejects_empty_sides():
    with pytest.raises(DomainError):
        split_indices(3, 0.01, seed=0)  # zero validation rows
    with pytest.raises(DomainError):
        split_indices(3, 0.99, seed=0)  # zero training rows


def test_split_dataset_matches_indices():
    x = low_rank_batch(n=25)
    xt, xv = split_dataset(x, 0.2, seed=3)
    ti, vi = split_indices(25, 0.2, seed=3)
    np.testing.assert_array_equal(xt, x[ti])
    np.testing.assert_array_equal(xv, x[vi])


# ---------------------------------------------------------------------------
# training runs
# ---------------------------------------------------------------------------


def test_train_ae_reduces_loss():
    x = low_rank_batch()
    model = build_ae(input_dim=6, latent_dim=2, hidden_dims=(8,), rng=Rng(1))
    model, history = train(model, x, quick_config(epochs=30))
    assert len(history) == 30
    assert [r.epoch for r in history.records] == list(range(1, 31))
    assert history.final().train_loss < 0.5 * history.records[0].train_loss
    assert all(r.kl_mean == 0.0 for r in history.records)  # no posterior
    assert history.wall_seconds > 0.0


def test_train_is_bit_reproducible():
    x = low_rank_batch()

    def run():
        model = build_ae(input_dim=6, latent_dim=2, hidden_dims=(8,), rng=Rng(2))
        return train(model, x, quick_config())

    m1, h1 = run()
    m2, h2 = run()
    np.testing.assert_array_equal(get_flat_params(m1), get_flat_params(m2))
    for r1, r2 in zip(h1.records, h2.records):
        assert r1 == r2


def test_train_zero_epochs_is_a_no_op():
    x = low_rank_batch()
    model = build_ae(input_dim=6, latent_dim=2, rng=Rng(3))
    before = get_flat_params(model).copy()
    model, history = train(model, x, quick_config(epochs=0))
    assert len(history) == 0
    np.testing.assert_array_equal(get_flat_params(model), before)


def test_train_vae_tracks_positive_kl():
    x = low_rank_batch()
    model = build_vae(input_dim=6, latent_dim=2, hidden_dims=(8,), rng=Rng(4))
    _, history = train(model, x, quick_config(epochs=8))
    assert all(r.kl_mean >= 0.0 for r in history.records)
    assert history.final().kl_mean > 0.0


def test_train_beta_override_changes_trajectory():
    x = low_rank_batch()

    def run(beta):
        model = build_vae(input_dim=6, latent_dim=2, hidden_dims=(8,),
                          beta=1.0, rng=Rng(5))
        _, history = train(model, x, quick_config(epochs=8, beta=beta))
        return history.final()

    strong = run(5.0)
    weak = run(0.0)
    assert strong.kl_mean < weak.kl_mean  # heavier penalty shrinks the posterior
    assert strong.train_loss != weak.train_loss


def test_train_validation_rows_never_reach_gradients():
    x = low_rank_batch(n=40)
    cfg = quick_config(epochs=4)
    _, val_idx = split_indices(40, cfg.val_fraction, cfg.seed)
    seen: set[int] = set()

    def hook(epoch, rows):
        seen.update(int(r) for r in rows)

    model = build_ae(input_dim=6, latent_dim=2, rng=Rng(6))
    train(model, x, cfg, batch_hook=hook)
    assert seen.isdisjoint(int(v) for v in val_idx)
    assert seen == set(range(40)) - {int(v) for v in val_idx}


def test_train_epoch_metrics_are_consistent():
    x = low_rank_batch()
    model = build_ae(input_dim=6, latent_dim=2, rng=Rng(7))
    _, history = train(model, x, quick_config(epochs=3))
    for r in history.records:
        assert r.rmse == pytest.approx(math.sqrt(r.mse), abs=1e-12)
        assert r.mae <= r.rmse + 1e-12


def test_train_epoch_metrics_match_posterior_mean_state():
    # the recorded val mse must equal a fresh reconstruction of the
    # validation slice with the final parameters
    x = low_rank_batch()
    cfg = quick_config(epochs=5)
    model = build_ae(input_dim=6, latent_dim=2, rng=Rng(8))
    model, history = train(model, x, cfg)
    _, xv = split_dataset(x, cfg.val_fraction, cfg.seed)
    recon, _, _ = forward_ae(model, xv)
    assert history.final().mse == pytest.approx(
        float(np.mean((recon - xv) ** 2)), abs=1e-12
    )


@pytest.mark.parametrize("lr", [1e12, 1e100])
def test_train_divergence_names_the_epoch(lr):
    x = low_rank_batch() * 1e3
    model = build_ae(input_dim=6, latent_dim=2, hidden_dims=(8,), rng=Rng(9))
    cfg = quick_config(optimizer="sgd", learning_rate=lr, epochs=10)
    with pytest.raises(TrainingError) as err:
        with np.errstate(all="ignore"):
            train(model, x, cfg)
    assert "diverged" in str(err.value)
    assert "epoch" in str(err.value)
    assert err.value.epoch is not None


def test_train_rejects_width_mismatch():
    model = build_ae(input_dim=6, latent_dim=2, rng=Rng(0))
    with pytest.raises(ShapeError):
        train(model, np.zeros((10, 5)), quick_config())


def test_sgd_and_adam_take_different_paths():
    x = low_rank_batch()

    def run(optimizer):
        model = build_ae(input_dim=6, latent_dim=2, rng=Rng(10))
        _, history = train(model, x, quick_config(optimizer=optimizer))
        return history.final().train_loss

    assert run("sgd") != run("adam")


# ---------------------------------------------------------------------------
# history persistence
# ---------------------------------------------------------------------------


def test_history_csv_round_trip(tmp_path):
    x = low_rank_batch()
    model = build_ae(input_dim=6, latent_dim=2, rng=Rng(11))
    _, history = train(model, x, quick_config(epochs=4))
    path = tmp_path / "history.csv"
    history.save_csv(path)

    text = path.read_text()
    assert text.splitlines()[0] == HISTORY_HEADER
    loaded = TrainingHistory.load_csv(path)
    assert len(loaded) == 4
    # rows are written with 9 significant digits
    for a, b in zip(loaded.records, history.records):
        assert a.epoch == b.epoch
        for field in ("train_loss", "val_loss", "kl_mean", "mse", "mae", "rmse"):
            assert getattr(a, field) == pytest.approx(getattr(b, field), rel=5e-9)


def test_history_load_rejects_wrong_header(tmp_path):
    path = tmp_path / "history.csv"
    path.write_text("epoch,train\n1,2.0\n")
    with pytest.raises(ParseError):
        TrainingHistory.load_csv(path)


def test_history_load_reports_bad_cell(tmp_path):
    path = tmp_path / "history.csv"
    path.write_text(HISTORY_HEADER + "\n1,0.5,0.6,0.0,oops,0.1,0.2\n")
    with pytest.raises(ParseError) as err:
        TrainingHistory.load_csv(path)
    assert "row" in str(err.value)


def test_history_final_requires_records():
    empty = TrainingHistory(records=[], wall_seconds=0.0)
    with pytest.raises(DomainError):
        empty.final()


def test_epoch_record_equality_roundtrip():
    r = EpochRecord(epoch=1, train_loss=1.0, val_loss=1.1, kl_mean=0.0,
                    mse=0.5, mae=0.4, rmse=math.sqrt(0.5))
    assert r == EpochRecord(**r.__dict__)
