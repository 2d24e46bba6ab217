"""Mini-batch training with per-epoch train/validation tracking.

The trainer mutates model parameters in place, reshuffles every epoch
from a per-epoch seed, and evaluates epoch metrics with the posterior
mean (epsilon = 0) so the recorded curves carry no sampling noise.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autoencoder import (VaeModel, backward, forward_ae, forward_vae,
                          gaussian_kl, loss_total)
from .errors import (ConfigError, DomainError, NumericError, ParseError,
                     ShapeError, TrainingError)
from .evaluation import recon_metrics
from .numerics import Rng, as_matrix

__all__ = [
    "OPTIMIZERS",
    "TrainConfig",
    "EpochRecord",
    "TrainingHistory",
    "HISTORY_HEADER",
    "split_dataset",
    "split_indices",
    "train",
]

OPTIMIZERS = ("sgd", "adam")
RECON_KINDS = ("mse", "bce")

HISTORY_HEADER = "epoch,train_loss,val_loss,kl_mean,mse,mae,rmse"


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    ``beta`` of None defers to the model's own beta (and is ignored for
    plain autoencoders). Adam is the default optimizer; plain SGD is
    kept for ablations.
    """

    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta: float | None = None
    recon_kind: str = "mse"
    seed: int = 0
    val_fraction: float = 0.2
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError("epochs must be a non-negative integer")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.beta is not None and self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.recon_kind not in RECON_KINDS:
            raise ConfigError(f"recon_kind must be one of {RECON_KINDS}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in the open interval (0, 1)")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            raise ConfigError("adam decay rates must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be > 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    kl_mean: float
    mse: float
    mae: float
    rmse: float


@dataclass
class TrainingHistory:
    """One record per completed epoch plus total wall-clock seconds."""

    records: list[EpochRecord] = field(default_factory=list)
    wall_seconds: float = 0.0

    def __len__(self) -> int:
        return len(self.records)

    def final(self) -> EpochRecord:
        if not self.records:
            raise DomainError("history is empty")
        return self.records[-1]

    def save_csv(self, path) -> None:
        lines = [HISTORY_HEADER]
        for r in self.records:
            lines.append(
                f"{r.epoch:d},{r.train_loss:.9g},{r.val_loss:.9g},{r.kl_mean:.9g},"
                f"{r.mse:.9g},{r.mae:.9g},{r.rmse:.9g}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_csv(cls, path) -> "TrainingHistory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
        if not rows or rows[0] != HISTORY_HEADER.split(","):
            raise ParseError(f"unexpected history header in {path}")
        records = []
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != 7:
                raise ParseError("wrong field count", row=i)
            try:
                records.append(EpochRecord(
                    epoch=int(row[0]),
                    train_loss=float(row[1]), val_loss=float(row[2]),
                    kl_mean=float(row[3]), mse=float(row[4]),
                    mae=float(row[5]), rmse=float(row[6]),
                ))
            except ValueError as exc:
                raise ParseError(f"bad numeric field: {exc}", row=i) from exc
        return cls(records=records)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def _split_indices(n: int, val_fraction: float, seed: int):
    if n < 2:
        raise DomainError("need at least two rows to split")
    if not 0.0 < val_fraction < 1.0:
        raise DomainError("val_fraction must lie in (0, 1)")
    val_n = int(n * val_fraction + 0.5)
    if val_n < 1 or val_n >= n:
        raise DomainError(
            f"val_fraction {val_fraction} leaves an empty split for n={n}"
        )
    perm = Rng(seed).permutation(n)
    return perm[val_n:], perm[:val_n]


def split_dataset(x, val_fraction: float, seed: int):
    """Seeded shuffle-and-split into (train, val); rows are conserved."""
    x = as_matrix(x, "x")
    train_idx, val_idx = _split_indices(x.shape[0], val_fraction, seed)
    return x[train_idx], x[val_idx]


def split_indices(n: int, val_fraction: float, seed: int):
    """Index form of :func:`split_dataset`, for callers that must slice
    labels or metadata alongside the rows."""
    return _split_indices(n, val_fraction, seed)


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def _make_optimizer(config: TrainConfig, params):
    if config.optimizer == "adam":
        return _Adam(params, config.learning_rate, config.adam_beta1,
                     config.adam_beta2, config.adam_eps)
    return _Sgd(params, config.learning_rate)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _posterior_mean_eval(model, x, eff_beta, recon_kind):
    """Loss, mean KL and reconstruction with zero latent noise."""
    if isinstance(model, VaeModel):
        eps = np.zeros((x.shape[0], model.latent_dim))
        trace = forward_vae(model, x, epsilon=eps)
        kl = gaussian_kl(trace.mu, trace.logvar)
        loss = loss_total(x, trace.reconstruction, trace.mu, trace.logvar,
                          beta=eff_beta, recon_kind=recon_kind)
        return loss, kl, trace.reconstruction
    recon, _, _ = forward_ae(model, x)
    return loss_total(x, recon, recon_kind=recon_kind), 0.0, recon


def train(model, x, config: TrainConfig, batch_hook=None):
    """Run mini-batch gradient training; returns (model, TrainingHistory).

    Parameters are updated in place. ``batch_hook``, when given, is
    called as ``batch_hook(epoch_index, original_row_indices)`` before
    each gradient step; it exists so tests can verify that validation
    rows never feed a gradient update.
    """
    x = as_matrix(x, "x")
    if x.shape[1] != model.input_dim:
        raise ShapeError(
            f"data has {x.shape[1]} columns, model expects {model.input_dim}"
        )
    train_idx, val_idx = _split_indices(x.shape[0], config.val_fraction, config.seed)
    x_train = x[train_idx]
    x_val = x[val_idx]
    n_train = x_train.shape[0]

    is_vae = isinstance(model, VaeModel)
    if config.beta is not None:
        eff_beta = config.beta
    else:
        eff_beta = model.beta if is_vae else 0.0
    k = model.latent_dim

    opt = _make_optimizer(config, model.parameters())
    records: list[EpochRecord] = []
    started = time.perf_counter()

    for epoch in range(config.epochs):
        # The input matrix was validated up front, so any non-finite value
        # surfacing inside an epoch means the parameters diverged.
        try:
            epoch_rng = Rng(config.seed + epoch)
            order = epoch_rng.permutation(n_train)
            for start in range(0, n_train, config.batch_size):
                sel = order[start:start + config.batch_size]
                xb = x_train[sel]
                if batch_hook is not None:
                    batch_hook(epoch, train_idx[sel])
                if is_vae:
                    eps = epoch_rng.normal(xb.shape[0] * k).reshape(xb.shape[0], k)
                    trace = forward_vae(model, xb, epsilon=eps)
                    grads = backward(model, trace, xb, beta=eff_beta,
                                     recon_kind=config.recon_kind)
                else:
                    _, _, trace = forward_ae(model, xb)
                    grads = backward(model, trace, xb,
                                     recon_kind=config.recon_kind)
                opt.step(model.parameters(), grads)

            train_loss, _, _ = _posterior_mean_eval(model, x_train, eff_beta,
                                                    config.recon_kind)
            val_loss, kl_mean, val_recon = _posterior_mean_eval(
                model, x_val, eff_beta, config.recon_kind)
            m = recon_metrics(x_val, val_recon)
        except (DomainError, NumericError) as exc:
            raise TrainingError(f"loss diverged: {exc}",
                                epoch=epoch + 1) from exc
        record = EpochRecord(
            epoch=epoch + 1, train_loss=train_loss, val_loss=val_loss,
            kl_mean=kl_mean, mse=m.mse, mae=m.mae, rmse=m.rmse,
        )
        values = (record.train_loss, record.val_loss, record.kl_mean,
                  record.mse, record.mae, record.rmse)
        if not all(math.isfinite(v) for v in values):
            raise TrainingError("loss diverged to a non-finite value",
                                epoch=epoch + 1)
        records.append(record)

    return model, TrainingHistory(records=records,
                                  wall_seconds=time.perf_counter() - started)
