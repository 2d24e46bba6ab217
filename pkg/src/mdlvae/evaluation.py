"""Model assessment: reconstruction metrics, paired significance tests,
noise robustness, latent-space measures, classification summary, timing,
and the two-model comparison table.

Everything here consumes fitted reconstructors through a small duck
interface: ``reconstruct(x)`` is required; ``transform``, ``kl_mean``,
``loss``, ``final_train_loss_`` and ``label`` are used when present so
plain test doubles stay easy to write.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, DomainError, ShapeError
from .numerics import Rng, as_matrix, student_t_cdf

__all__ = [
    "ReconMetrics",
    "TTestResult",
    "ModelBlock",
    "ComparisonReport",
    "recon_metrics",
    "per_sample_errors",
    "paired_t_test",
    "noise_robustness",
    "latent_entropy",
    "latent_silhouette",
    "classification_report",
    "time_inference",
    "compare_models",
    "COMPARISON_CSV_HEADER",
]

COMPARISON_CSV_HEADER = "metric,vae_mdl,standard_ae,t,p"


@dataclass(frozen=True)
class ReconMetrics:
    """Elementwise reconstruction errors over all n*d entries."""

    mse: float
    mae: float
    rmse: float

    def __post_init__(self):
        if min(self.mse, self.mae, self.rmse) < 0:
            raise DomainError("reconstruction metrics must be non-negative")
        if abs(self.rmse - math.sqrt(self.mse)) > 1e-12 * max(1.0, self.rmse):
            raise DomainError("rmse must equal sqrt(mse)")

    def as_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "rmse": self.rmse}


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p_two_sided: float
    mean_diff: float

    def __post_init__(self):
        if not 0.0 <= self.p_two_sided <= 1.0:
            raise DomainError("p-value must lie in [0, 1]")
        if self.df < 1:
            raise DomainError("degrees of freedom must be >= 1")

    def as_dict(self) -> dict:
        return {"t": self.t, "df": self.df, "p_two_sided": self.p_two_sided,
                "mean_diff": self.mean_diff}


def _paired_shapes(x, xhat):
    x = as_matrix(x, "x")
    xhat = as_matrix(xhat, "xhat")
    if x.shape != xhat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    return x, xhat


def recon_metrics(x, xhat) -> ReconMetrics:
    """MSE, MAE and RMSE over every entry of the pair."""
    x, xhat = _paired_shapes(x, xhat)
    diff = xhat - x
    mse = float(np.mean(diff * diff))
    mae = float(np.mean(np.abs(diff)))
    return ReconMetrics(mse=mse, mae=mae, rmse=math.sqrt(mse))


def per_sample_errors(x, xhat, kind: str = "se") -> np.ndarray:
    """Per-row mean squared ('se') or absolute ('ae') error.

    These vectors are the pairing unit for the significance tests: one
    error per test sample, compared across models.
    """
    x, xhat = _paired_shapes(x, xhat)
    diff = xhat - x
    if kind == "se":
        return np.mean(diff * diff, axis=1)
    if kind == "ae":
        return np.mean(np.abs(diff), axis=1)
    raise DomainError(f"unknown per-sample error kind {kind!r}")


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on matched error vectors.

    t = mean(d) / (sd(d)/sqrt(n)) with d = a - b and the n-1 divisor;
    identical profiles (zero variance of d) are a degenerate-data error
    rather than an infinite statistic.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise DomainError("paired test needs at least two pairs")
    d = a - b
    mean_diff = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise DegenerateDataError("paired differences have zero variance")
    t = mean_diff / (sd / math.sqrt(n))
    p = 2.0 * (1.0 - student_t_cdf(abs(t), n - 1))
    p = min(max(p, 0.0), 1.0)
    return TTestResult(t=float(t), df=n - 1, p_two_sided=p, mean_diff=mean_diff)


def noise_robustness(model, x, nsr: float, rng: Rng) -> dict:
    """Reconstruction RMSE against the clean signal under input noise.

    Gaussian noise is rescaled exactly so its RMS over the batch is
    ``nsr`` times the RMS of the mean-centred signal; nsr = 0 reproduces
    the clean evaluation bit for bit.
    """
    x = as_matrix(x, "x")
    if nsr < 0:
        raise DomainError("noise-to-signal ratio must be >= 0")
    if nsr == 0.0:
        noisy = x
    else:
        centred = x - np.mean(x)
        signal_rms = math.sqrt(float(np.mean(centred * centred)))
        eta = rng.normal(x.size).reshape(x.shape)
        eta_rms = math.sqrt(float(np.mean(eta * eta)))
        if eta_rms == 0.0 or signal_rms == 0.0:
            noisy = x
        else:
            noisy = x + eta * (nsr * signal_rms / eta_rms)
    recon = model.reconstruct(noisy)
    return {"noise_error": recon_metrics(x, recon).rmse, "nsr": float(nsr)}


def latent_entropy(logvar) -> float:
    """Mean per-sample differential entropy of the diagonal Gaussian
    posterior, in nats: 0.5 * sum_j (log(2*pi*e) + logvar_j)."""
    lv = np.atleast_2d(np.asarray(logvar, dtype=np.float64))
    if not np.all(np.isfinite(lv)):
        raise DomainError("logvar contains non-finite entries")
    per_sample = 0.5 * np.sum(math.log(2.0 * math.pi * math.e) + lv, axis=1)
    return float(np.mean(per_sample))


def latent_silhouette(z, labels) -> float:
    """Mean silhouette coefficient with Euclidean distance.

    Singleton clusters contribute 0; a point with a = b = 0 contributes
    0 as well (the 0/0 case for exactly duplicated clusters).
    """
    z = as_matrix(z, "z")
    labels = np.asarray(labels).ravel()
    n = z.shape[0]
    if labels.shape[0] != n:
        raise ShapeError("labels length must match the number of rows")
    if n < 3:
        raise DomainError("silhouette needs at least three points")
    classes = np.unique(labels)
    if classes.shape[0] < 2:
        raise DomainError("silhouette needs at least two classes")

    diff = z[:, None, :] - z[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    masks = {c: labels == c for c in classes}
    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        own_mask = masks[own].copy()
        own_count = int(own_mask.sum())
        if own_count == 1:
            scores[i] = 0.0
            continue
        own_mask[i] = False
        a = float(np.mean(dist[i][own_mask]))
        b = min(float(np.mean(dist[i][masks[c]])) for c in classes if c != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(np.mean(scores))


def classification_report(y_true, y_pred, positive_class: int = 1) -> dict:
    """Binary confusion matrix [[tn, fp], [fn, tp]], accuracy and F1.

    F1 uses the zero-division convention: precision or recall with an
    empty denominator counts as 0, so an all-negative task reports
    perfect accuracy with F1 = 0.
    """
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.shape != y_pred.shape:
        raise ShapeError("label vectors must have equal length")
    if y_true.size == 0:
        raise DomainError("empty label vectors")
    seen = set(np.unique(y_true)) | set(np.unique(y_pred))
    if not seen <= {0, 1}:
        raise DomainError(f"labels must be binary 0/1, saw {sorted(seen)}")
    if positive_class not in (0, 1):
        raise DomainError("positive_class must be 0 or 1")

    tp = int(np.sum((y_true == positive_class) & (y_pred == positive_class)))
    tn = int(np.sum((y_true != positive_class) & (y_pred != positive_class)))
    fp = int(np.sum((y_true != positive_class) & (y_pred == positive_class)))
    fn = int(np.sum((y_true == positive_class) & (y_pred != positive_class)))
    n = y_true.size
    accuracy = (tp + tn) / n
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = (2.0 * precision * recall / (precision + recall)
          if (precision + recall) > 0 else 0.0)
    return {
        "confusion": [[tn, fp], [fn, tp]],
        "accuracy": accuracy,
        "f1": f1,
    }


def time_inference(model, x, repeats: int = 5) -> float:
    """Median wall-clock seconds for a full-batch reconstruction pass."""
    if repeats < 1:
        raise DomainError("repeats must be >= 1")
    x = as_matrix(x, "x")
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.reconstruct(x)
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


# ---------------------------------------------------------------------------
# Two-model comparison
# ---------------------------------------------------------------------------

@dataclass
class ModelBlock:
    label: str
    metrics: ReconMetrics
    kl_mean: float
    train_loss: float | None
    test_loss: float | None
    noise_error: dict
    inference_seconds: float
    silhouette: float | None = None

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "metrics": self.metrics.as_dict(),
            "kl_mean": self.kl_mean,
            "train_loss": self.train_loss,
            "test_loss": self.test_loss,
            "noise_error": dict(self.noise_error),
            "inference_seconds": self.inference_seconds,
            "silhouette": self.silhouette,
        }


@dataclass
class ComparisonReport:
    """Exactly two model blocks plus per-metric paired tests."""

    models: list
    t_tests: dict

    def __post_init__(self):
        if len(self.models) != 2:
            raise DomainError("a comparison report holds exactly two models")

    def as_dict(self) -> dict:
        tests = {}
        for name, res in self.t_tests.items():
            tests[name] = res if isinstance(res, str) else res.as_dict()
        return {"models": [m.as_dict() for m in self.models], "t_tests": tests}

    def save_json(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")

    def save_csv(self, path) -> None:
        """Figure-style table: one row per metric, models side by side."""
        a, b = self.models
        lines = [COMPARISON_CSV_HEADER]
        for name in ("mse", "mae", "rmse"):
            res = self.t_tests[name]
            if isinstance(res, str):
                t_txt = p_txt = res
            else:
                t_txt = f"{res.t:.4f}"
                p_txt = f"{res.p_two_sided:.4f}"
            a_val = getattr(a.metrics, name)
            b_val = getattr(b.metrics, name)
            lines.append(f"{name},{a_val:.6f},{b_val:.6f},{t_txt},{p_txt}")
        Path(path).write_text("\n".join(lines) + "\n")


def _model_block(model, test, labels, nsr_list, seed, timing_repeats,
                 fallback_label) -> tuple[ModelBlock, np.ndarray]:
    recon = model.reconstruct(test)
    metrics = recon_metrics(test, recon)
    kl = float(model.kl_mean(test)) if hasattr(model, "kl_mean") else 0.0
    train_loss = getattr(model, "final_train_loss_", None)
    test_loss = float(model.loss(test)) if hasattr(model, "loss") else None
    noise = {}
    for i, nsr in enumerate(nsr_list):
        # Same seed per nsr for both models: the noise realisation is shared.
        out = noise_robustness(model, test, float(nsr), Rng(seed + 7919 * (i + 1)))
        noise[f"{float(nsr):g}"] = out["noise_error"]
    seconds = time_inference(model, test, repeats=timing_repeats)
    sil = None
    if labels is not None and hasattr(model, "transform"):
        sil = latent_silhouette(model.transform(test), labels)
    block = ModelBlock(
        label=str(getattr(model, "label", fallback_label)),
        metrics=metrics, kl_mean=kl, train_loss=train_loss,
        test_loss=test_loss, noise_error=noise, inference_seconds=seconds,
        silhouette=sil,
    )
    return block, recon


def compare_models(model_a, model_b, test, labels=None, nsr_list=(0.1,),
                   seed: int = 0, timing_repeats: int = 5) -> ComparisonReport:
    """Build the side-by-side report for two fitted reconstructors.

    Paired tests run on per-sample squared errors (MSE test), absolute
    errors (MAE test) and root squared errors (RMSE test). Identical
    error profiles are reported as the string "identical" instead of a
    statistic.
    """
    test = as_matrix(test, "test")
    block_a, recon_a = _model_block(model_a, test, labels, nsr_list, seed,
                                    timing_repeats, "model_a")
    block_b, recon_b = _model_block(model_b, test, labels, nsr_list, seed,
                                    timing_repeats, "model_b")

    se_a = per_sample_errors(test, recon_a, "se")
    se_b = per_sample_errors(test, recon_b, "se")
    ae_a = per_sample_errors(test, recon_a, "ae")
    ae_b = per_sample_errors(test, recon_b, "ae")
    pairs = {
        "mse": (se_a, se_b),
        "mae": (ae_a, ae_b),
        "rmse": (np.sqrt(se_a), np.sqrt(se_b)),
    }
    tests = {}
    for name, (ea, eb) in pairs.items():
        try:
            tests[name] = paired_t_test(ea, eb)
        except DegenerateDataError:
            tests[name] = "identical"
    return ComparisonReport(models=[block_a, block_b], t_tests=tests)
