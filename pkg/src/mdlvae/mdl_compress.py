"""Two-part code lengths and rank-selected principal-axis compression.

A data matrix is summarized by a column mean, a rank-k orthonormal basis of
its sample covariance, and the per-row codes in that basis. The cost of a
summary is measured in bits as

* model bits: every stored parameter (basis, mean, codes) at a fixed bit
  width per 64-bit real (``PARAM_BITS``, a single-precision storage
  assumption), and
* data bits: a Gaussian code length for the reconstruction residuals at a
  fixed quantization offset (``QUANT_BITS``), floored at zero bits per
  scalar, with a small variance floor so exact fits stay finite.

Rank selection scans every candidate width and keeps the total-bit
minimizer, preferring the narrower basis on ties.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import ParamsMixin, check_is_fitted
from .errors import DomainError, ParseError, ShapeError
from .numerics import as_matrix, sym_eig

__all__ = [
    "PARAM_BITS",
    "QUANT_BITS",
    "RESIDUAL_VAR_FLOOR",
    "DescriptionLength",
    "CompressionResult",
    "gaussian_code_bits",
    "description_length",
    "scan_description_lengths",
    "select_rank",
    "compress",
    "decompress",
    "compression_efficiency",
    "semantic_preservation",
    "MdlCompressor",
]

# Bits charged per stored real parameter (basis, mean and code entries).
PARAM_BITS = 32
# Quantization offset added to the Gaussian residual code, bits per scalar.
QUANT_BITS = 20
# Variance floor keeping the residual code finite on exact fits.
RESIDUAL_VAR_FLOOR = 1e-12

_LOG2_2PI_E = math.log2(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class DescriptionLength:
    """Two-part code length in bits: parameters plus coded residuals."""

    model_bits: float
    data_bits: float
    total_bits: float = float("nan")

    def __post_init__(self):
        if self.model_bits < 0.0 or self.data_bits < 0.0:
            raise DomainError("bit counts must be non-negative")
        expected = self.model_bits + self.data_bits
        if math.isnan(self.total_bits):
            object.__setattr__(self, "total_bits", expected)
        elif abs(self.total_bits - expected) > 1e-9 * max(1.0, abs(expected)):
            raise DomainError("total_bits must equal model_bits + data_bits")

    def as_dict(self) -> dict:
        return {
            "model_bits": self.model_bits,
            "data_bits": self.data_bits,
            "total_bits": self.total_bits,
        }


@dataclass(frozen=True)
class CompressionResult:
    """Mean, orthonormal basis, codes and cost of one compression."""

    mean: np.ndarray
    basis: np.ndarray
    rank: int
    codes: np.ndarray
    dl: DescriptionLength
    residual_sigma: float

    def __post_init__(self):
        d, k = self.basis.shape
        if not 1 <= self.rank <= d or k != self.rank:
            raise ShapeError(f"rank {self.rank} inconsistent with basis shape {self.basis.shape}")
        gram_err = float(np.max(np.abs(self.basis.T @ self.basis - np.eye(k))))
        if gram_err > 1e-8:
            raise ShapeError(f"basis columns are not orthonormal (error {gram_err:.3e})")
        if self.residual_sigma < 0.0:
            raise DomainError("residual_sigma must be >= 0")

    def to_json(self) -> str:
        payload = {
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "rank": self.rank,
            "dl": self.dl.as_dict(),
            "residual_sigma": self.residual_sigma,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str, codes: np.ndarray | None = None) -> "CompressionResult":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid compression JSON: {exc}") from exc
        dl = DescriptionLength(**payload["dl"])
        if codes is None:
            codes = np.zeros((0, int(payload["rank"])))
        return cls(
            mean=np.asarray(payload["mean"], dtype=np.float64),
            basis=np.asarray(payload["basis"], dtype=np.float64),
            rank=int(payload["rank"]),
            codes=as_matrix(codes, "codes"),
            dl=dl,
            residual_sigma=float(payload["residual_sigma"]),
        )


# ---------------------------------------------------------------------------
# Spectral decomposition of the sample covariance, memoized by content
# ---------------------------------------------------------------------------

_SPECTRAL_CACHE: OrderedDict = OrderedDict()
_SPECTRAL_CACHE_MAX = 8


def _spectral(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(column means, eigenvalues desc, eigenvector columns) of cov(x).

    Covariance uses divisor n - 1; eigenvalues are clamped at zero. The
    decomposition is cached by matrix content because rank scans evaluate
    every candidate rank against the same input.
    """
    key = (x.shape, x.tobytes())
    hit = _SPECTRAL_CACHE.get(key)
    if hit is not None:
        _SPECTRAL_CACHE.move_to_end(key)
        return hit
    n = x.shape[0]
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    values, vectors = sym_eig(cov)
    values = np.maximum(values, 0.0)
    result = (mean, values, vectors)
    _SPECTRAL_CACHE[key] = result
    if len(_SPECTRAL_CACHE) > _SPECTRAL_CACHE_MAX:
        _SPECTRAL_CACHE.popitem(last=False)
    return result


def _check_rank_args(x, rank: int) -> np.ndarray:
    x = as_matrix(x, "x")
    n, d = x.shape
    if n < 2:
        raise DomainError(f"need at least 2 rows, got {n}")
    if not 1 <= rank <= d:
        raise DomainError(f"rank must be in [1, {d}], got {rank}")
    return x


def gaussian_code_bits(sigma2: float, quant_bits: int = QUANT_BITS,
                       var_floor: float = RESIDUAL_VAR_FLOOR) -> float:
    """Bits to code one residual scalar of variance ``sigma2``, floored at 0."""
    if sigma2 < 0.0:
        raise DomainError("variance must be >= 0")
    return max(0.0, 0.5 * math.log2(2.0 * math.pi * math.e * (sigma2 + var_floor)) + quant_bits)


def description_length(x, rank: int, param_bits: int = PARAM_BITS,
                       quant_bits: int = QUANT_BITS,
                       var_floor: float = RESIDUAL_VAR_FLOOR) -> DescriptionLength:
    """Two-part code length of ``x`` summarized at the given rank.

    Model bits charge ``param_bits`` for each basis, mean and code entry:
    ``param_bits * (d*k + d + n*k)``. Data bits charge each of the ``n*d``
    residual scalars a Gaussian code at the residual RMS ``sigma``:
    ``n*d * max(0, 0.5*log2(2*pi*e*(sigma^2 + var_floor)) + quant_bits)``.
    The residual RMS comes from the covariance spectrum: the squared
    residual mass of a rank-k summary equals ``(n-1)`` times the sum of the
    discarded eigenvalues, which tests cross-check against brute-force
    reconstruction residuals.
    """
    x = _check_rank_args(x, rank)
    n, d = x.shape
    _, values, _ = _spectral(x)
    residual_ss = (n - 1) * float(np.sum(values[rank:]))
    sigma2 = residual_ss / (n * d)
    model_bits = float(param_bits) * (d * rank + d + n * rank)
    data_bits = n * d * gaussian_code_bits(sigma2, quant_bits, var_floor)
    return DescriptionLength(model_bits=model_bits, data_bits=data_bits)


def scan_description_lengths(x) -> list[DescriptionLength]:
    """Description lengths for every rank 1..d of ``x``."""
    x = as_matrix(x, "x")
    return [description_length(x, k) for k in range(1, x.shape[1] + 1)]


def select_rank(x) -> int:
    """The rank minimizing total description length; ties go to smaller k."""
    x = as_matrix(x, "x")
    best_rank = 1
    best_total = math.inf
    for k in range(1, x.shape[1] + 1):
        total = description_length(x, k).total_bits
        if total < best_total:
            best_total = total
            best_rank = k
    return best_rank


def compress(x, rank: int) -> CompressionResult:
    """Project ``x`` onto the top ``rank`` principal axes of its covariance."""
    x = _check_rank_args(x, rank)
    n, d = x.shape
    mean, values, vectors = _spectral(x)
    basis = vectors[:, :rank].copy()
    codes = (x - mean) @ basis
    dl = description_length(x, rank)
    residual_ss = (n - 1) * float(np.sum(values[rank:]))
    sigma = math.sqrt(max(0.0, residual_ss / (n * d)))
    return CompressionResult(
        mean=mean, basis=basis, rank=rank, codes=codes, dl=dl, residual_sigma=sigma
    )


def decompress(result: CompressionResult) -> np.ndarray:
    """Reconstruct rows from codes: ``codes @ basis.T + mean``."""
    return result.codes @ result.basis.T + result.mean


def compression_efficiency(d: int, k: int) -> float:
    """Width ratio before/after compression, ``d / k``."""
    if k < 1 or d < 1 or k > d:
        raise DomainError(f"need 1 <= k <= d, got d={d}, k={k}")
    return d / k


def semantic_preservation(x, x_rec) -> float:
    """Mean row-wise cosine similarity between data and its reconstruction."""
    x = as_matrix(x, "x")
    x_rec = as_matrix(x_rec, "x_rec")
    if x.shape != x_rec.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_rec.shape}")
    norms_a = np.linalg.norm(x, axis=1)
    norms_b = np.linalg.norm(x_rec, axis=1)
    if np.any(norms_a == 0.0) or np.any(norms_b == 0.0):
        raise DomainError("cosine similarity is undefined for zero-norm rows")
    sims = np.sum(x * x_rec, axis=1) / (norms_a * norms_b)
    return float(np.mean(np.clip(sims, -1.0, 1.0)))


class MdlCompressor(ParamsMixin):
    """Principal-axis compressor with description-length rank selection.

    Parameters
    ----------
    rank : int or None
        Basis width. ``None`` scans all ranks at fit time and keeps the
        total-description-length minimizer.

    Fitted attributes: ``mean_``, ``basis_``, ``rank_``, ``dl_``,
    ``residual_sigma_``, ``result_`` and, when selection ran, ``scan_``
    (one :class:`DescriptionLength` per candidate rank).
    """

    def __init__(self, rank: int | None = None):
        self.rank = rank

    def fit(self, X, y=None):
        X = as_matrix(X, "X")
        if self.rank is None:
            self.scan_ = scan_description_lengths(X)
            rank = int(np.argmin([dl.total_bits for dl in self.scan_])) + 1
        else:
            rank = int(self.rank)
        self.result_ = compress(X, rank)
        self.rank_ = rank
        self.mean_ = self.result_.mean
        self.basis_ = self.result_.basis
        self.dl_ = self.result_.dl
        self.residual_sigma_ = self.result_.residual_sigma
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "basis_")
        X = as_matrix(X, "X")
        if X.shape[1] != self.basis_.shape[0]:
            raise ShapeError(
                f"X has {X.shape[1]} columns, compressor was fitted on {self.basis_.shape[0]}"
            )
        return (X - self.mean_) @ self.basis_

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X).transform(X)

    def inverse_transform(self, Z) -> np.ndarray:
        check_is_fitted(self, "basis_")
        Z = as_matrix(Z, "Z")
        if Z.shape[1] != self.rank_:
            raise ShapeError(f"Z has {Z.shape[1]} columns, expected {self.rank_}")
        return Z @ self.basis_.T + self.mean_
