"""Dense autoencoder and variational autoencoder with analytic gradients.

Networks are plain affine-plus-activation stacks in float64. The
variational model carries an encoder trunk, separate mean and log-variance
heads, and a decoder; latents are sampled as ``z = mu + exp(logvar/2) * eps``
so gradients flow to both heads through the reconstruction term as well as
the KL term. ``backward`` returns analytic gradients matching
``loss_total`` exactly; the finite-difference kernel in
:mod:`mdlvae.numerics` is the independent check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DomainError, ParseError, ShapeError
from .numerics import Rng, as_matrix

__all__ = [
    "ACTIVATIONS",
    "Layer",
    "MlpParams",
    "AeModel",
    "VaeModel",
    "AeForwardTrace",
    "VaeForwardTrace",
    "init_params",
    "build_ae",
    "build_vae",
    "forward_ae",
    "forward_vae",
    "decode",
    "gaussian_kl",
    "loss_total",
    "backward",
    "get_flat_params",
    "set_flat_params",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

ACTIVATIONS = ("tanh", "sigmoid", "linear")

_BCE_CLIP = 1e-12


@dataclass
class Layer:
    """One affine map plus elementwise activation."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str

    def __post_init__(self):
        self.weights = as_matrix(self.weights, "weights")
        if self.biases.ndim != 1 or self.biases.shape[0] != self.weights.shape[1]:
            raise ShapeError("biases must be 1-D with length = weight columns")
        if not np.all(np.isfinite(self.biases)):
            raise DomainError("biases contain non-finite entries")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")


@dataclass
class MlpParams:
    """A chain of layers whose dimensions link up."""

    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise DomainError("an MLP needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weights.shape[1] != nxt.weights.shape[0]:
                raise ShapeError(
                    f"layer dimensions do not chain: {prev.weights.shape} then {nxt.weights.shape}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weights.shape[1]


@dataclass
class AeModel:
    """Standard autoencoder: deterministic encoder and decoder stacks."""

    encoder: MlpParams
    decoder: MlpParams

    def __post_init__(self):
        if self.encoder.out_dim != self.decoder.in_dim:
            raise ShapeError(
                f"encoder output {self.encoder.out_dim} != decoder input {self.decoder.in_dim}"
            )

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for mlp in (self.encoder, self.decoder):
            for layer in mlp.layers:
                out.append(layer.weights)
                out.append(layer.biases)
        return out


@dataclass
class VaeModel:
    """Variational autoencoder with diagonal-Gaussian posterior heads."""

    trunk: MlpParams
    mu_head: Layer
    logvar_head: Layer
    decoder: MlpParams
    beta: float = 1.0

    def __post_init__(self):
        h = self.trunk.out_dim
        if self.mu_head.weights.shape[0] != h or self.logvar_head.weights.shape[0] != h:
            raise ShapeError("posterior heads must consume the trunk output")
        if self.mu_head.weights.shape[1] != self.logvar_head.weights.shape[1]:
            raise ShapeError("mu and logvar heads must share the latent width")
        if self.mu_head.weights.shape[1] != self.decoder.in_dim:
            raise ShapeError("decoder input must equal the latent width")
        if self.beta < 0.0:
            raise DomainError("beta must be >= 0")

    @property
    def input_dim(self) -> int:
        return self.trunk.in_dim

    @property
    def latent_dim(self) -> int:
        return self.mu_head.weights.shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.trunk.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        out.extend([self.mu_head.weights, self.mu_head.biases])
        out.extend([self.logvar_head.weights, self.logvar_head.biases])
        for layer in self.decoder.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out


@dataclass
class AeForwardTrace:
    x: np.ndarray
    latent: np.ndarray
    reconstruction: np.ndarray
    encoder_caches: list = field(repr=False, default_factory=list)
    decoder_caches: list = field(repr=False, default_factory=list)


@dataclass
class VaeForwardTrace:
    x: np.ndarray
    mu: np.ndarray
    logvar: np.ndarray
    epsilon: np.ndarray
    z: np.ndarray
    reconstruction: np.ndarray
    trunk_out: np.ndarray = field(repr=False, default=None)
    trunk_caches: list = field(repr=False, default_factory=list)
    decoder_caches: list = field(repr=False, default_factory=list)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def init_params(layer_dims, activations, rng: Rng, scale: float = 1.0) -> MlpParams:
    """Seeded MLP initialization: N(0, (scale/sqrt(fan_in))^2) weights, zero biases."""
    dims = list(layer_dims)
    if len(dims) < 2:
        raise DomainError("need at least input and output dimensions")
    acts = list(activations)
    if len(acts) != len(dims) - 1:
        raise DomainError(
            f"need {len(dims) - 1} activations for {len(dims)} dims, got {len(acts)}"
        )
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], acts):
        w = rng.normal(fan_in * fan_out).reshape(fan_in, fan_out)
        w *= scale / math.sqrt(fan_in)
        layers.append(Layer(weights=w, biases=np.zeros(fan_out), activation=act))
    return MlpParams(layers=layers)


def build_ae(
    input_dim: int,
    latent_dim: int,
    hidden_dims=(64,),
    hidden_activation: str = "tanh",
    output_activation: str = "linear",
    rng: Rng | None = None,
    scale: float = 1.0,
) -> AeModel:
    """Symmetric autoencoder: input -> hidden -> latent and mirrored decoder."""
    rng = rng if rng is not None else Rng(0)
    hidden = list(hidden_dims)
    enc_dims = [input_dim, *hidden, latent_dim]
    enc_acts = [hidden_activation] * len(hidden) + ["linear"]
    dec_dims = [latent_dim, *reversed(hidden), input_dim]
    dec_acts = [hidden_activation] * len(hidden) + [output_activation]
    return AeModel(
        encoder=init_params(enc_dims, enc_acts, rng, scale),
        decoder=init_params(dec_dims, dec_acts, rng, scale),
    )


def build_vae(
    input_dim: int,
    latent_dim: int,
    hidden_dims=(64,),
    hidden_activation: str = "tanh",
    output_activation: str = "linear",
    beta: float = 1.0,
    rng: Rng | None = None,
    scale: float = 1.0,
) -> VaeModel:
    """VAE with a shared trunk, linear posterior heads and mirrored decoder."""
    rng = rng if rng is not None else Rng(0)
    hidden = list(hidden_dims)
    if not hidden:
        raise DomainError("the variational encoder needs at least one hidden layer")
    trunk = init_params([input_dim, *hidden], [hidden_activation] * len(hidden), rng, scale)
    h = hidden[-1]
    mu_head = _affine_head(h, latent_dim, rng, scale)
    logvar_head = _affine_head(h, latent_dim, rng, scale)
    dec_dims = [latent_dim, *reversed(hidden), input_dim]
    dec_acts = [hidden_activation] * len(hidden) + [output_activation]
    decoder = init_params(dec_dims, dec_acts, rng, scale)
    return VaeModel(trunk=trunk, mu_head=mu_head, logvar_head=logvar_head,
                    decoder=decoder, beta=beta)


def _affine_head(fan_in: int, fan_out: int, rng: Rng, scale: float) -> Layer:
    w = rng.normal(fan_in * fan_out).reshape(fan_in, fan_out)
    w *= scale / math.sqrt(fan_in)
    return Layer(weights=w, biases=np.zeros(fan_out), activation="linear")


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _apply_activation(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(pre)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-pre))
    return pre


def _activation_grad(post: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - post * post
    if kind == "sigmoid":
        return post * (1.0 - post)
    return np.ones_like(post)


def _mlp_forward(params: MlpParams, x: np.ndarray):
    caches = []
    h = x
    for layer in params.layers:
        pre = h @ layer.weights + layer.biases
        post = _apply_activation(pre, layer.activation)
        caches.append((h, post))
        h = post
    return h, caches


def _mlp_backward(params: MlpParams, caches, grad_out: np.ndarray):
    grads: list[np.ndarray] = []
    g = grad_out
    for layer, (h_in, post) in zip(reversed(params.layers), reversed(caches)):
        d_pre = g * _activation_grad(post, layer.activation)
        grads.insert(0, d_pre.sum(axis=0))          # biases
        grads.insert(0, h_in.T @ d_pre)             # weights
        g = d_pre @ layer.weights.T
    return grads, g


def _check_batch(x, dim: int) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[1] != dim:
        raise ShapeError(f"batch has {x.shape[1]} columns, model expects {dim}")
    return x


def forward_ae(model: AeModel, x) -> tuple[np.ndarray, np.ndarray, AeForwardTrace]:
    """Deterministic forward pass: returns (reconstruction, latent, trace)."""
    x = _check_batch(x, model.input_dim)
    latent, enc_caches = _mlp_forward(model.encoder, x)
    recon, dec_caches = _mlp_forward(model.decoder, latent)
    trace = AeForwardTrace(
        x=x, latent=latent, reconstruction=recon,
        encoder_caches=enc_caches, decoder_caches=dec_caches,
    )
    return recon, latent, trace


def forward_vae(model: VaeModel, x, rng: Rng | None = None,
                epsilon: np.ndarray | None = None) -> VaeForwardTrace:
    """Reparameterized forward pass.

    Noise comes from ``epsilon`` when given (deterministic tests and
    posterior-mean evaluation), otherwise it is drawn from ``rng``.
    """
    x = _check_batch(x, model.input_dim)
    n = x.shape[0]
    k = model.latent_dim
    trunk_out, trunk_caches = _mlp_forward(model.trunk, x)
    mu = trunk_out @ model.mu_head.weights + model.mu_head.biases
    logvar = trunk_out @ model.logvar_head.weights + model.logvar_head.biases
    if epsilon is None:
        if rng is None:
            raise DomainError("forward_vae needs an rng or a fixed epsilon")
        epsilon = rng.normal(n * k).reshape(n, k)
    else:
        epsilon = as_matrix(epsilon, "epsilon")
        if epsilon.shape != (n, k):
            raise ShapeError(f"epsilon must have shape {(n, k)}, got {epsilon.shape}")
    z = mu + np.exp(0.5 * logvar) * epsilon
    recon, dec_caches = _mlp_forward(model.decoder, z)
    return VaeForwardTrace(
        x=x, mu=mu, logvar=logvar, epsilon=epsilon, z=z, reconstruction=recon,
        trunk_out=trunk_out, trunk_caches=trunk_caches, decoder_caches=dec_caches,
    )


def decode(model, z) -> np.ndarray:
    """Run latents through the decoder stack of either model kind."""
    z = as_matrix(z, "z")
    if z.shape[1] != model.latent_dim:
        raise ShapeError(
            f"latents have {z.shape[1]} columns, model expects {model.latent_dim}")
    out, _ = _mlp_forward(model.decoder, z)
    return out


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def gaussian_kl(mu, logvar) -> float:
    """Mean per-sample KL from N(mu, diag exp(logvar)) to the standard normal.

    Per sample: ``0.5 * sum_j(mu_j^2 + exp(logvar_j) - 1 - logvar_j)``.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    logvar = np.atleast_2d(np.asarray(logvar, dtype=np.float64))
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu shape {mu.shape} != logvar shape {logvar.shape}")
    per_sample = 0.5 * np.sum(mu * mu + np.exp(logvar) - 1.0 - logvar, axis=1)
    return float(np.mean(per_sample))


def _recon_loss(x: np.ndarray, recon: np.ndarray, kind: str) -> float:
    n = x.shape[0]
    if kind == "mse":
        return float(np.sum((recon - x) ** 2) / n)
    if kind == "bce":
        if np.min(x) < 0.0 or np.max(x) > 1.0:
            raise DomainError("bce requires targets in [0, 1]")
        if np.min(recon) < 0.0 or np.max(recon) > 1.0:
            raise DomainError("bce requires reconstructions in [0, 1]")
        p = np.clip(recon, _BCE_CLIP, 1.0 - _BCE_CLIP)
        return float(-np.sum(x * np.log(p) + (1.0 - x) * np.log1p(-p)) / n)
    raise DomainError(f"unknown reconstruction loss {kind!r}")


def _recon_loss_grad(x: np.ndarray, recon: np.ndarray, kind: str) -> np.ndarray:
    n = x.shape[0]
    if kind == "mse":
        return 2.0 * (recon - x) / n
    if kind == "bce":
        p = np.clip(recon, _BCE_CLIP, 1.0 - _BCE_CLIP)
        grad = (p - x) / (p * (1.0 - p)) / n
        # clip has zero slope outside its bounds
        grad[(recon < _BCE_CLIP) | (recon > 1.0 - _BCE_CLIP)] = 0.0
        return grad
    raise DomainError(f"unknown reconstruction loss {kind!r}")


def loss_total(x, reconstruction, mu=None, logvar=None, beta: float = 1.0,
               recon_kind: str = "mse") -> float:
    """Reconstruction loss (sum over dims, mean over batch) plus ``beta`` * KL.

    The KL term applies only when posterior statistics are given; plain
    autoencoders pass ``mu=None``.
    """
    x = as_matrix(x, "x")
    reconstruction = as_matrix(reconstruction, "reconstruction")
    if x.shape != reconstruction.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {reconstruction.shape}")
    loss = _recon_loss(x, reconstruction, recon_kind)
    if mu is not None:
        if logvar is None:
            raise DomainError("logvar is required together with mu")
        loss += beta * gaussian_kl(mu, logvar)
    return loss


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(model, trace, x, beta: float | None = None,
             recon_kind: str = "mse") -> list[np.ndarray]:
    """Analytic gradients of ``loss_total`` for every parameter array.

    Returns gradients in the order of ``model.parameters()``. The trace
    must come from a forward pass of this model on this exact batch.
    """
    x = as_matrix(x, "x")
    if trace.x.shape != x.shape or not np.array_equal(trace.x, x):
        raise ContractError("trace was produced for a different batch")
    if isinstance(model, AeModel):
        if not isinstance(trace, AeForwardTrace):
            raise ContractError("trace does not belong to this model kind")
        return _backward_ae(model, trace, x, recon_kind)
    if isinstance(model, VaeModel):
        if not isinstance(trace, VaeForwardTrace):
            raise ContractError("trace does not belong to this model kind")
        eff_beta = model.beta if beta is None else float(beta)
        return _backward_vae(model, trace, x, eff_beta, recon_kind)
    raise ContractError(f"unsupported model type {type(model).__name__}")


def _backward_ae(model: AeModel, trace: AeForwardTrace, x, recon_kind):
    if len(trace.decoder_caches) != len(model.decoder.layers) or len(
            trace.encoder_caches) != len(model.encoder.layers):
        raise ContractError("trace does not match the model architecture")
    g_recon = _recon_loss_grad(x, trace.reconstruction, recon_kind)
    dec_grads, g_latent = _mlp_backward(model.decoder, trace.decoder_caches, g_recon)
    enc_grads, _ = _mlp_backward(model.encoder, trace.encoder_caches, g_latent)
    return enc_grads + dec_grads


def _backward_vae(model: VaeModel, trace: VaeForwardTrace, x, beta, recon_kind):
    if len(trace.decoder_caches) != len(model.decoder.layers) or len(
            trace.trunk_caches) != len(model.trunk.layers):
        raise ContractError("trace does not match the model architecture")
    n = x.shape[0]
    g_recon = _recon_loss_grad(x, trace.reconstruction, recon_kind)
    dec_grads, g_z = _mlp_backward(model.decoder, trace.decoder_caches, g_recon)

    # Reconstruction reaches mu directly and logvar through the noise scale;
    # the KL term adds mu/n and (exp(logvar) - 1)/(2n).
    g_mu = g_z + beta * trace.mu / n
    g_logvar = (
        g_z * trace.epsilon * 0.5 * np.exp(0.5 * trace.logvar)
        + beta * 0.5 * (np.exp(trace.logvar) - 1.0) / n
    )

    g_mu_w = trace.trunk_out.T @ g_mu
    g_mu_b = g_mu.sum(axis=0)
    g_lv_w = trace.trunk_out.T @ g_logvar
    g_lv_b = g_logvar.sum(axis=0)
    g_trunk_out = g_mu @ model.mu_head.weights.T + g_logvar @ model.logvar_head.weights.T
    trunk_grads, _ = _mlp_backward(model.trunk, trace.trunk_caches, g_trunk_out)
    return trunk_grads + [g_mu_w, g_mu_b, g_lv_w, g_lv_b] + dec_grads


# ---------------------------------------------------------------------------
# Flat parameter views (used by gradient checks and optimizers)
# ---------------------------------------------------------------------------

def get_flat_params(model) -> np.ndarray:
    """All parameters concatenated into one vector (copy)."""
    return np.concatenate([p.ravel() for p in model.parameters()])


def set_flat_params(model, vector: np.ndarray) -> None:
    """Write a flat vector back into the model's parameter arrays."""
    offset = 0
    for p in model.parameters():
        chunk = vector[offset:offset + p.size]
        if chunk.size != p.size:
            raise ShapeError("flat vector does not match the parameter count")
        p[...] = chunk.reshape(p.shape)
        offset += p.size
    if offset != vector.size:
        raise ShapeError("flat vector does not match the parameter count")


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _layer_dict(layer: Layer) -> dict:
    return {"w": layer.weights.tolist(), "b": layer.biases.tolist()}


def _layer_from_dict(payload: dict, activation: str) -> Layer:
    return Layer(
        weights=np.asarray(payload["w"], dtype=np.float64),
        biases=np.asarray(payload["b"], dtype=np.float64),
        activation=activation,
    )


def model_to_dict(model) -> dict:
    """JSON-ready model description: kind, shapes, activations and weights."""
    if isinstance(model, AeModel):
        layers = model.encoder.layers + model.decoder.layers
        return {
            "kind": "ae",
            "latent_k": model.latent_dim,
            "beta": None,
            "dims": [[l.weights.shape[0], l.weights.shape[1]] for l in layers],
            "activations": [l.activation for l in layers],
            "layers": [_layer_dict(l) for l in layers],
            "encoder_layers": len(model.encoder.layers),
        }
    if isinstance(model, VaeModel):
        layers = (model.trunk.layers + [model.mu_head, model.logvar_head]
                  + model.decoder.layers)
        return {
            "kind": "vae",
            "latent_k": model.latent_dim,
            "beta": model.beta,
            "dims": [[l.weights.shape[0], l.weights.shape[1]] for l in layers],
            "activations": [l.activation for l in layers],
            "layers": [_layer_dict(l) for l in layers],
            "trunk_layers": len(model.trunk.layers),
        }
    raise ContractError(f"unsupported model type {type(model).__name__}")


def model_from_dict(payload: dict):
    kind = payload.get("kind")
    acts = payload["activations"]
    layers = [_layer_from_dict(l, a) for l, a in zip(payload["layers"], acts)]
    if kind == "ae":
        n_enc = int(payload["encoder_layers"])
        return AeModel(
            encoder=MlpParams(layers=layers[:n_enc]),
            decoder=MlpParams(layers=layers[n_enc:]),
        )
    if kind == "vae":
        n_trunk = int(payload["trunk_layers"])
        return VaeModel(
            trunk=MlpParams(layers=layers[:n_trunk]),
            mu_head=layers[n_trunk],
            logvar_head=layers[n_trunk + 1],
            decoder=MlpParams(layers=layers[n_trunk + 2:]),
            beta=float(payload["beta"]),
        )
    raise ParseError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True))


def load_model(path):
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid model JSON: {exc}") from exc
    return model_from_dict(payload)
