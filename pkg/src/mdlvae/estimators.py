"""Fit/transform wrappers around the networks and the MDL compressor.

Two estimators with the scikit-learn parameter protocol:

* :class:`StandardAutoencoder` trains a plain autoencoder on raw inputs.
* :class:`MdlVae` optionally routes inputs through MDL compression
  before a variational autoencoder and can take its latent width from
  the MDL-selected rank, realizing the "compress, then embed" pipeline.

Both expose ``reconstruct`` in the original input space so they can be
compared head to head, plus ``loss``/``kl_mean`` in their native
training space.
"""

from __future__ import annotations

import numpy as np

from .autoencoder import (build_ae, build_vae, decode, forward_ae, forward_vae,
                          gaussian_kl, loss_total)
from .base import ParamsMixin, check_is_fitted
from .errors import ConfigError, ShapeError
from .mdl_compress import MdlCompressor
from .numerics import Rng, as_matrix
from .training import TrainConfig, train

__all__ = ["StandardAutoencoder", "MdlVae"]

# Weight initialization must not share a stream with the per-epoch
# shuffle seeds (seed, seed+1, ...), so it lives far away from them.
_INIT_SEED_OFFSET = 2 ** 32


def _train_config(est, beta=None) -> TrainConfig:
    return TrainConfig(
        epochs=est.epochs, batch_size=est.batch_size,
        learning_rate=est.learning_rate, beta=beta,
        recon_kind=est.recon_kind, seed=est.seed,
        val_fraction=est.val_fraction, optimizer=est.optimizer,
    )


class StandardAutoencoder(ParamsMixin):
    """Deterministic autoencoder on raw features."""

    def __init__(self, latent_dim=8, hidden_dims=(64,), hidden_activation="tanh",
                 output_activation="linear", epochs=100, batch_size=32,
                 learning_rate=1e-3, recon_kind="mse", optimizer="adam",
                 val_fraction=0.2, seed=0, init_scale=1.0, label="standard_ae"):
        self.latent_dim = latent_dim
        self.hidden_dims = hidden_dims
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.recon_kind = recon_kind
        self.optimizer = optimizer
        self.val_fraction = val_fraction
        self.seed = seed
        self.init_scale = init_scale
        self.label = label

    def fit(self, x, y=None):
        x = as_matrix(x, "x")
        self.n_features_in_ = x.shape[1]
        init_rng = Rng(self.seed + _INIT_SEED_OFFSET)
        self.model_ = build_ae(
            x.shape[1], self.latent_dim, hidden_dims=self.hidden_dims,
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
            rng=init_rng, scale=self.init_scale,
        )
        self.model_, self.history_ = train(self.model_, x, _train_config(self))
        self.final_train_loss_ = (self.history_.final().train_loss
                                  if len(self.history_) else None)
        return self

    def _check_x(self, x):
        check_is_fitted(self, "model_")
        x = as_matrix(x, "x")
        if x.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"x has {x.shape[1]} features, fitted for {self.n_features_in_}")
        return x

    def transform(self, x) -> np.ndarray:
        x = self._check_x(x)
        _, latent, _ = forward_ae(self.model_, x)
        return latent

    def fit_transform(self, x, y=None) -> np.ndarray:
        return self.fit(x, y).transform(x)

    def inverse_transform(self, z) -> np.ndarray:
        check_is_fitted(self, "model_")
        return decode(self.model_, z)

    def reconstruct(self, x) -> np.ndarray:
        x = self._check_x(x)
        recon, _, _ = forward_ae(self.model_, x)
        return recon

    def loss(self, x) -> float:
        x = self._check_x(x)
        recon, _, _ = forward_ae(self.model_, x)
        return loss_total(x, recon, recon_kind=self.recon_kind)

    def kl_mean(self, x) -> float:
        self._check_x(x)
        return 0.0

    def score(self, x, y=None) -> float:
        """Negative reconstruction MSE (larger is better)."""
        x = self._check_x(x)
        recon, _, _ = forward_ae(self.model_, x)
        return -float(np.mean((recon - x) ** 2))


class MdlVae(ParamsMixin):
    """Variational autoencoder with optional MDL front end.

    ``use_mdl_preprocess`` trains the network on MDL-compressed codes
    and maps reconstructions back through the linear decompressor;
    ``latent_from_mdl`` sets the VAE latent width to the MDL-selected
    rank (otherwise ``latent_dim`` must be given). With both switches
    off this is a plain VAE on raw features.

    The default ``beta`` of 0.01 weights the KL term against a
    sum-of-squares reconstruction on unit-scale codes; 2*sigma^2 for a
    per-entry noise level around 0.07, so reconstruction stays sharp
    while the posterior remains regularized.
    """

    def __init__(self, latent_dim=None, hidden_dims=(64,), hidden_activation="tanh",
                 output_activation="linear", beta=0.01, epochs=100, batch_size=32,
                 learning_rate=1e-3, recon_kind="mse", optimizer="adam",
                 val_fraction=0.2, seed=0, init_scale=1.0,
                 use_mdl_preprocess=True, latent_from_mdl=True, mdl_rank=None,
                 standardize_codes=True, label="vae_mdl"):
        self.latent_dim = latent_dim
        self.hidden_dims = hidden_dims
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.beta = beta
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.recon_kind = recon_kind
        self.optimizer = optimizer
        self.val_fraction = val_fraction
        self.seed = seed
        self.init_scale = init_scale
        self.use_mdl_preprocess = use_mdl_preprocess
        self.latent_from_mdl = latent_from_mdl
        self.mdl_rank = mdl_rank
        self.standardize_codes = standardize_codes
        self.label = label

    def fit(self, x, y=None):
        x = as_matrix(x, "x")
        self.n_features_in_ = x.shape[1]

        self.compressor_ = None
        self.code_scale_ = None
        train_x = x
        if self.use_mdl_preprocess or self.latent_from_mdl:
            self.compressor_ = MdlCompressor(rank=self.mdl_rank)
            self.compressor_.fit(x)
        if self.use_mdl_preprocess:
            train_x = self.compressor_.transform(x)
            if self.standardize_codes:
                # Raw codes carry the spectrum's scale, which saturates a
                # tanh trunk; rescale per dimension to unit spread.
                scale = np.std(train_x, axis=0, ddof=1)
                scale[scale == 0.0] = 1.0
                self.code_scale_ = scale
                train_x = train_x / scale

        if self.latent_from_mdl:
            k = self.compressor_.rank_
        elif self.latent_dim is not None:
            k = self.latent_dim
        else:
            raise ConfigError(
                "latent_dim is required when latent_from_mdl is off")
        # A latent at least as wide as its input adds nothing to compress.
        k = min(k, train_x.shape[1])

        init_rng = Rng(self.seed + _INIT_SEED_OFFSET)
        self.model_ = build_vae(
            train_x.shape[1], k, hidden_dims=self.hidden_dims,
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
            beta=self.beta, rng=init_rng, scale=self.init_scale,
        )
        self.latent_dim_ = k
        self.model_, self.history_ = train(self.model_, train_x,
                                           _train_config(self))
        self.final_train_loss_ = (self.history_.final().train_loss
                                  if len(self.history_) else None)
        return self

    def _check_x(self, x):
        check_is_fitted(self, "model_")
        x = as_matrix(x, "x")
        if x.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"x has {x.shape[1]} features, fitted for {self.n_features_in_}")
        return x

    def _to_train_space(self, x) -> np.ndarray:
        if self.use_mdl_preprocess:
            codes = self.compressor_.transform(x)
            if self.code_scale_ is not None:
                codes = codes / self.code_scale_
            return codes
        return x

    def _from_train_space(self, out) -> np.ndarray:
        if self.use_mdl_preprocess:
            if self.code_scale_ is not None:
                out = out * self.code_scale_
            out = self.compressor_.inverse_transform(out)
        return out

    def _posterior(self, x):
        """Posterior statistics and zero-noise reconstruction in train space."""
        net_in = self._to_train_space(x)
        eps = np.zeros((net_in.shape[0], self.model_.latent_dim))
        return net_in, forward_vae(self.model_, net_in, epsilon=eps)

    def posterior(self, x):
        """(mu, logvar) of the encoder for each row of x."""
        x = self._check_x(x)
        _, trace = self._posterior(x)
        return trace.mu, trace.logvar

    def transform(self, x) -> np.ndarray:
        """Posterior mean embedding."""
        x = self._check_x(x)
        _, trace = self._posterior(x)
        return trace.mu

    def fit_transform(self, x, y=None) -> np.ndarray:
        return self.fit(x, y).transform(x)

    def inverse_transform(self, z) -> np.ndarray:
        """Decode latents all the way back to the original feature space."""
        check_is_fitted(self, "model_")
        return self._from_train_space(decode(self.model_, z))

    def reconstruct(self, x) -> np.ndarray:
        """Zero-noise reconstruction mapped back to the original space."""
        x = self._check_x(x)
        _, trace = self._posterior(x)
        return self._from_train_space(trace.reconstruction)

    def loss(self, x) -> float:
        """Total loss (recon + beta*KL) in the model's training space."""
        x = self._check_x(x)
        net_in, trace = self._posterior(x)
        return loss_total(net_in, trace.reconstruction, trace.mu, trace.logvar,
                          beta=self.beta, recon_kind=self.recon_kind)

    def kl_mean(self, x) -> float:
        x = self._check_x(x)
        _, trace = self._posterior(x)
        return gaussian_kl(trace.mu, trace.logvar)

    def score(self, x, y=None) -> float:
        """Negative original-space reconstruction MSE (larger is better)."""
        x = self._check_x(x)
        recon = self.reconstruct(x)
        return -float(np.mean((recon - x) ** 2))
