"""Tests for the from-scratch AE/VAE: forward passes, losses, backprop.

Analytic gradients are validated against the central finite-difference
oracle; the heavier multi-seed sweep lives in the acceptance suite.
"""

import math

import numpy as np
import pytest

from mdlvae.autoencoder import (
    ACTIVATIONS,
    AeModel,
    Layer,
    MlpParams,
    VaeModel,
    backward,
    build_ae,
    build_vae,
    decode,
    forward_ae,
    forward_vae,
    gaussian_kl,
    get_flat_params,
    init_params,
    load_model,
    loss_total,
    model_from_dict,
    model_to_dict,
    save_model,
    set_flat_params,
)
from mdlvae.errors import ContractError, DomainError, ParseError, ShapeError
from mdlvae.numerics import Rng, finite_diff_gradient


def tiny_ae(seed=0):
    return build_ae(input_dim=5, latent_dim=2, hidden_dims=(4,), rng=Rng(seed))


def tiny_vae(seed=0, beta=1.0, output_activation="linear"):
    return build_vae(
        input_dim=5,
        latent_dim=2,
        hidden_dims=(4,),
        beta=beta,
        output_activation=output_activation,
        rng=Rng(seed),
    )


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def test_init_params_shapes_and_zero_biases():
    params = init_params([3, 7, 2], ["tanh", "linear"], Rng(1))
    assert [l.weights.shape for l in params.layers] == [(3, 7), (7, 2)]
    for layer in params.layers:
        np.testing.assert_array_equal(layer.biases, np.zeros(layer.biases.shape))
    assert params.in_dim == 3 and params.out_dim == 2


def test_init_params_scale_statistics():
    params = init_params([400, 300], ["linear"], Rng(3), scale=1.5)
    sd = float(np.std(params.layers[0].weights))
    assert sd == pytest.approx(1.5 / math.sqrt(400), rel=0.05)


def test_init_params_validation():
    with pytest.raises(DomainError):
        init_params([3], [], Rng(0))
    with pytest.raises(DomainError):
        init_params([3, 2], ["tanh", "tanh"], Rng(0))


def test_layer_rejects_unknown_activation():
    with pytest.raises(DomainError):
        Layer(weights=np.zeros((2, 2)), biases=np.zeros(2), activation="relu")
    assert "relu" not in ACTIVATIONS


def test_build_ae_wiring():
    model = tiny_ae()
    assert model.input_dim == 5 and model.latent_dim == 2
    enc = model.encoder.layers
    dec = model.decoder.layers
    assert [l.weights.shape for l in enc] == [(5, 4), (4, 2)]
    assert [l.weights.shape for l in dec] == [(2, 4), (4, 5)]
    assert enc[-1].activation == "linear"  # latent layer carries no squashing
    assert len(model.parameters()) == 8


def test_build_vae_wiring():
    model = tiny_vae(beta=0.3)
    assert model.beta == 0.3
    assert model.trunk.layers[0].weights.shape == (5, 4)
    assert model.mu_head.weights.shape == (4, 2)
    assert model.logvar_head.weights.shape == (4, 2)
    assert model.mu_head.activation == "linear"
    assert model.latent_dim == 2
    # trunk, mu head, logvar head, decoder; weights and biases each
    assert len(model.parameters()) == 2 + 2 + 2 + 4


def test_build_vae_needs_hidden_layer():
    with pytest.raises(DomainError):
        build_vae(input_dim=4, latent_dim=2, hidden_dims=(), rng=Rng(0))


def test_mlp_params_chaining_validated():
    good = Layer(np.zeros((3, 4)), np.zeros(4), "tanh")
    bad = Layer(np.zeros((5, 2)), np.zeros(2), "linear")
    with pytest.raises(ShapeError):
        MlpParams(layers=[good, bad])


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def test_forward_ae_matches_manual_computation():
    model = tiny_ae(seed=4)
    x = Rng(9).normal(10).reshape(2, 5)
    recon, latent, trace = forward_ae(model, x)

    h = np.tanh(x @ model.encoder.layers[0].weights + model.encoder.layers[0].biases)
    z = h @ model.encoder.layers[1].weights + model.encoder.layers[1].biases
    g = np.tanh(z @ model.decoder.layers[0].weights + model.decoder.layers[0].biases)
    out = g @ model.decoder.layers[1].weights + model.decoder.layers[1].biases

    np.testing.assert_allclose(latent, z, atol=1e-15)
    np.testing.assert_allclose(recon, out, atol=1e-15)
    np.testing.assert_array_equal(trace.reconstruction, recon)


def test_forward_ae_zero_weights_sigmoid_outputs_half():
    model = build_ae(
        input_dim=3, latent_dim=2, hidden_dims=(3,),
        output_activation="sigmoid", rng=Rng(0),
    )
    for layer in (*model.encoder.layers, *model.decoder.layers):
        layer.weights[:] = 0.0
    recon, _, _ = forward_ae(model, np.ones((4, 3)))
    np.testing.assert_array_equal(recon, np.full((4, 3), 0.5))


def test_forward_ae_rejects_wrong_width():
    with pytest.raises(ShapeError):
        forward_ae(tiny_ae(), np.zeros((2, 4)))


def test_forward_vae_reparameterization():
    model = tiny_vae(seed=2)
    x = Rng(5).normal(15).reshape(3, 5)
    eps = Rng(6).normal(6).reshape(3, 2)
    trace = forward_vae(model, x, epsilon=eps)
    np.testing.assert_allclose(
        trace.z, trace.mu + np.exp(0.5 * trace.logvar) * eps, atol=1e-15
    )
    np.testing.assert_array_equal(trace.epsilon, eps)

    # zero epsilon collapses the sample onto the posterior mean
    mean_trace = forward_vae(model, x, epsilon=np.zeros((3, 2)))
    np.testing.assert_array_equal(mean_trace.z, mean_trace.mu)
    np.testing.assert_allclose(
        mean_trace.reconstruction, decode(model, mean_trace.mu), atol=1e-15
    )


def test_forward_vae_rng_is_deterministic():
    model = tiny_vae(seed=2)
    x = Rng(5).normal(10).reshape(2, 5)
    t1 = forward_vae(model, x, rng=Rng(11))
    t2 = forward_vae(model, x, rng=Rng(11))
    np.testing.assert_array_equal(t1.z, t2.z)
    assert not np.array_equal(t1.z, forward_vae(model, x, rng=Rng(12)).z)


def test_forward_vae_requires_noise_source():
    model = tiny_vae()
    x = np.zeros((2, 5))
    with pytest.raises(DomainError):
        forward_vae(model, x)
    with pytest.raises(ShapeError):
        forward_vae(model, x, epsilon=np.zeros((2, 3)))


def test_decode_validates_latent_width():
    with pytest.raises(ShapeError):
        decode(tiny_ae(), np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def test_gaussian_kl_closed_forms():
    # standard posterior: zero divergence
    assert gaussian_kl(np.zeros((3, 2)), np.zeros((3, 2))) == 0.0
    # unit mean, unit variance, one dim: 0.5 * mu^2 = 0.5
    assert gaussian_kl(np.array([[1.0]]), np.array([[0.0]])) == pytest.approx(0.5)
    # mean over the batch of per-sample sums
    mu = np.array([[1.0, 0.0], [0.0, 0.0]])
    lv = np.zeros((2, 2))
    assert gaussian_kl(mu, lv) == pytest.approx(0.25)
    # variance term: 0.5 * (e^l - 1 - l)
    l = 0.7
    assert gaussian_kl(np.array([[0.0]]), np.array([[l]])) == pytest.approx(
        0.5 * (math.exp(l) - 1.0 - l), abs=1e-12
    )


def test_loss_total_mse_is_sum_over_dims_mean_over_batch():
    x = np.zeros((4, 3))
    recon = np.full((4, 3), 2.0)
    # each row contributes 3 * 2^2 = 12
    assert loss_total(x, recon) == pytest.approx(12.0)


def test_loss_total_bce_hand_value():
    x = np.array([[1.0, 0.0]])
    p = np.array([[0.8, 0.3]])
    expect = -(math.log(0.8) + math.log(0.7))
    assert loss_total(x, p, recon_kind="bce") == pytest.approx(expect, abs=1e-12)


def test_loss_total_bce_clamps_saturated_probabilities():
    x = np.array([[1.0, 0.0]])
    p = np.array([[0.0, 1.0]])  # worst case: exactly wrong with certainty
    val = loss_total(x, p, recon_kind="bce")
    assert math.isfinite(val)
    assert val == pytest.approx(-2.0 * math.log(1e-12), rel=1e-4)


def test_loss_total_adds_scaled_kl():
    x = np.zeros((2, 3))
    recon = np.zeros((2, 3))
    mu = np.ones((2, 1))
    lv = np.zeros((2, 1))
    assert loss_total(x, recon, mu=mu, logvar=lv, beta=0.0) == 0.0
    assert loss_total(x, recon, mu=mu, logvar=lv, beta=2.0) == pytest.approx(1.0)


def test_loss_total_rejects_unknown_kind():
    with pytest.raises(DomainError):
        loss_total(np.zeros((1, 1)), np.zeros((1, 1)), recon_kind="huber")


# ---------------------------------------------------------------------------
# backprop against finite differences
# ---------------------------------------------------------------------------


def _check_ae_gradients(recon_kind, seed, output_activation):
    model = build_ae(
        input_dim=4, latent_dim=2, hidden_dims=(5,),
        output_activation=output_activation, rng=Rng(seed),
    )
    x = Rng(seed + 100).uniform(12).reshape(3, 4)

    recon, _, trace = forward_ae(model, x)
    analytic = np.concatenate(
        [g.ravel() for g in backward(model, trace, x, recon_kind=recon_kind)]
    )

    theta0 = get_flat_params(model)

    def loss_at(theta):
        set_flat_params(model, theta)
        r, _, _ = forward_ae(model, x)
        return loss_total(x, r, recon_kind=recon_kind)

    numeric = finite_diff_gradient(loss_at, theta0)
    set_flat_params(model, theta0)
    scale = np.maximum(1e-4, np.maximum(np.abs(analytic), np.abs(numeric)))
    assert float(np.max(np.abs(analytic - numeric) / scale)) < 1e-4


def _check_vae_gradients(recon_kind, seed, beta):
    output = "sigmoid" if recon_kind == "bce" else "linear"
    model = build_vae(
        input_dim=4, latent_dim=2, hidden_dims=(5,),
        beta=beta, output_activation=output, rng=Rng(seed),
    )
    x = Rng(seed + 200).uniform(12).reshape(3, 4)
    eps = Rng(seed + 300).normal(6).reshape(3, 2)

    trace = forward_vae(model, x, epsilon=eps)
    analytic = np.concatenate(
        [g.ravel() for g in backward(model, trace, x, recon_kind=recon_kind)]
    )

    theta0 = get_flat_params(model)

    def loss_at(theta):
        set_flat_params(model, theta)
        t = forward_vae(model, x, epsilon=eps)
        return loss_total(
            x, t.reconstruction, mu=t.mu, logvar=t.logvar,
            beta=beta, recon_kind=recon_kind,
        )

    numeric = finite_diff_gradient(loss_at, theta0)
    set_flat_params(model, theta0)
    scale = np.maximum(1e-4, np.maximum(np.abs(analytic), np.abs(numeric)))
    assert float(np.max(np.abs(analytic - numeric) / scale)) < 1e-4


@pytest.mark.parametrize("seed", [0, 1])
def test_ae_gradients_mse(seed):
    _check_ae_gradients("mse", seed, "linear")


@pytest.mark.parametrize("seed", [0, 1])
def test_ae_gradients_bce(seed):
    _check_ae_gradients("bce", seed, "sigmoid")


@pytest.mark.parametrize("seed", [0, 1])
@pytest.mark.parametrize("beta", [1.0, 0.1])
def test_vae_gradients_mse(seed, beta):
    _check_vae_gradients("mse", seed, beta)


def test_vae_gradients_bce():
    _check_vae_gradients("bce", 3, 1.0)


def test_backward_beta_override_scales_kl_term():
    model = tiny_vae(beta=1.0)
    x = Rng(8).normal(10).reshape(2, 5)
    eps = np.zeros((2, 2))
    trace = forward_vae(model, x, epsilon=eps)
    g_default = backward(model, trace, x)
    trace = forward_vae(model, x, epsilon=eps)
    g_zero = backward(model, trace, x, beta=0.0)
    # with beta = 0 the KL pull on the mu head disappears
    assert any(
        not np.allclose(a, b) for a, b in zip(g_default, g_zero)
    )


def test_backward_rejects_stale_trace():
    model = tiny_ae()
    x = Rng(1).normal(10).reshape(2, 5)
    _, _, trace = forward_ae(model, x)
    with pytest.raises(ContractError):
        backward(model, trace, x + 1.0)


def test_backward_rejects_foreign_model():
    model = tiny_ae()
    other = tiny_vae()
    x = Rng(1).normal(10).reshape(2, 5)
    _, _, trace = forward_ae(model, x)
    with pytest.raises(ContractError):
        backward(other, trace, x)


# ---------------------------------------------------------------------------
# parameter vector and persistence
# ---------------------------------------------------------------------------


def test_flat_params_round_trip():
    model = tiny_vae(seed=7)
    theta = get_flat_params(model)
    set_flat_params(model, theta * 2.0)
    np.testing.assert_allclose(get_flat_params(model), theta * 2.0, atol=0)
    with pytest.raises(ShapeError):
        set_flat_params(model, theta[:-1])


def test_ae_persistence_round_trip(tmp_path):
    model = tiny_ae(seed=5)
    path = tmp_path / "model_ae.json"
    save_model(model, path)
    loaded = load_model(path)
    assert isinstance(loaded, AeModel)
    np.testing.assert_array_equal(get_flat_params(loaded), get_flat_params(model))
    x = Rng(3).normal(10).reshape(2, 5)
    np.testing.assert_array_equal(
        forward_ae(loaded, x)[0], forward_ae(model, x)[0]
    )


def test_vae_persistence_round_trip(tmp_path):
    model = tiny_vae(seed=6, beta=0.25, output_activation="sigmoid")
    path = tmp_path / "model_vae.json"
    save_model(model, path)
    loaded = load_model(path)
    assert isinstance(loaded, VaeModel)
    assert loaded.beta == 0.25
    np.testing.assert_array_equal(get_flat_params(loaded), get_flat_params(model))


def test_model_dict_kind_dispatch():
    ae_payload = model_to_dict(tiny_ae())
    vae_payload = model_to_dict(tiny_vae())
    assert ae_payload["kind"] == "ae" and vae_payload["kind"] == "vae"
    assert isinstance(model_from_dict(ae_payload), AeModel)
    assert isinstance(model_from_dict(vae_payload), VaeModel)
    with pytest.raises(ParseError):
        model_from_dict({**ae_payload, "kind": "pca"})
