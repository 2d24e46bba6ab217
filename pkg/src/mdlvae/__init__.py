"""MDL-compressed variational autoencoder pipeline.

Minimum-description-length rank selection feeding a from-scratch
variational autoencoder, with a full evaluation harness: reconstruction
metrics, paired significance tests, noise robustness, latent-space
quality and a two-model comparison pipeline behind a CLI.
"""

__version__ = "0.1.0"

from .data import Dataset, SyntheticConfig, generate_synthetic, load_csv, save_csv
from .embedding import ConceptVector, EmbeddingTable, combine_sum, cosine_similarity
from .errors import (ConfigError, ContractError, ConvergenceError,
                     DegenerateDataError, DomainError, MdlvaeError,
                     NotFittedError, NumericError, ParseError, ShapeError,
                     TrainingError, UnknownTermError)
from .estimators import MdlVae, StandardAutoencoder
from .evaluation import (ComparisonReport, ReconMetrics, TTestResult,
                         classification_report, compare_models, latent_entropy,
                         latent_silhouette, noise_robustness, paired_t_test,
                         per_sample_errors, recon_metrics, time_inference)
from .mdl_compress import (CompressionResult, DescriptionLength, MdlCompressor,
                           compress, decompress, description_length,
                           select_rank)
from .numerics import Rng, finite_diff_gradient, student_t_cdf, sym_eig
from .training import TrainConfig, TrainingHistory, split_dataset, train

__all__ = [
    "__version__",
    # data
    "Dataset", "SyntheticConfig", "generate_synthetic", "load_csv", "save_csv",
    # embedding
    "ConceptVector", "EmbeddingTable", "combine_sum", "cosine_similarity",
    # errors
    "MdlvaeError", "ShapeError", "DomainError", "UnknownTermError",
    "ConvergenceError", "NumericError", "ParseError", "TrainingError",
    "DegenerateDataError", "ContractError", "ConfigError", "NotFittedError",
    # estimators
    "MdlVae", "StandardAutoencoder",
    # evaluation
    "ComparisonReport", "ReconMetrics", "TTestResult", "classification_report",
    "compare_models", "latent_entropy", "latent_silhouette", "noise_robustness",
    "paired_t_test", "per_sample_errors", "recon_metrics", "time_inference",
    # mdl
    "CompressionResult", "DescriptionLength", "MdlCompressor", "compress",
    "decompress", "description_length", "select_rank",
    # numerics
    "Rng", "finite_diff_gradient", "student_t_cdf", "sym_eig",
    # training
    "TrainConfig", "TrainingHistory", "split_dataset", "train",
]
