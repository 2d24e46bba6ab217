"""Command-line pipeline: generate | compress | train | evaluate | compare | report.

One JSON config document drives every command; flags override config
fields, config fields override defaults. Artifact-producing commands
write fixed file names under the output directory plus a run manifest
whose artifact hashes exclude timing fields, so re-runs of the same
config hash are byte-comparable.
"""

from __future__ import annotations

import argparse
import copy
import datetime
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .data import (Dataset, SyntheticConfig, generate_synthetic, load_csv,
                   normalize, save_csv)
from .embedding import EmbeddingTable
from .errors import ConfigError, MdlvaeError, ParseError
from .estimators import MdlVae, StandardAutoencoder
from .evaluation import (compare_models, latent_entropy, latent_silhouette,
                         noise_robustness, recon_metrics, time_inference)
from .mdl_compress import compress, scan_description_lengths, select_rank
from .numerics import Rng
from .training import split_indices

__all__ = [
    "DEFAULTS",
    "TIMING_KEYS",
    "OUTPUT_DIR_ENV",
    "ExperimentConfig",
    "RunManifest",
    "canonical_json",
    "mask_timing",
    "masked_artifact_hash",
    "load_experiment_config",
    "run_command",
    "main",
]

OUTPUT_DIR_ENV = "MDLVAE_OUTPUT_DIR"

MODEL_LABELS = ("vae_mdl", "standard_ae")

# JSON keys whose values are wall-clock measurements; they are nulled
# before hashing so determinism checks see only reproducible content.
TIMING_KEYS = frozenset({
    "inference_seconds", "wall_seconds", "started_at", "finished_at",
})

DEFAULTS = {
    "dataset": {
        "kind": "synthetic",
        "n_samples": 2000,
        "n_features": 64,
        "true_rank": 8,
        "noise_sigma": 0.05,
        "n_classes": 2,
        "class_separation": 3.0,
        "seed": 42,
        "path": None,
        "normalization": "none",
    },
    "split": {"test_fraction": 0.2, "seed": 42},
    "pipeline": {"use_mdl_preprocess": True, "latent_from_mdl": True},
    "models": {
        "vae_mdl": {
            "latent_dim": None,
            "hidden_dims": [64],
            "hidden_activation": "tanh",
            "output_activation": "linear",
            "beta": 0.01,
            "init_scale": 1.0,
            "standardize_codes": True,
            "mdl_rank": None,
        },
        "standard_ae": {
            "latent_dim": 8,
            "hidden_dims": [64],
            "hidden_activation": "tanh",
            "output_activation": "linear",
            "init_scale": 1.0,
        },
    },
    "training": {
        "epochs": 100,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "recon_kind": "mse",
        "optimizer": "adam",
        "val_fraction": 0.2,
        "seed": 0,
    },
    "evaluation": {"nsr_list": [0.1], "timing_repeats": 5},
}


# ---------------------------------------------------------------------------
# Canonical JSON and timing-masked hashing
# ---------------------------------------------------------------------------

def canonical_json(payload) -> str:
    """Deterministic serialization: sorted keys, fixed separators."""
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def mask_timing(payload):
    """Recursively null every wall-clock field (copy; input untouched)."""
    if isinstance(payload, dict):
        return {k: (None if k in TIMING_KEYS else mask_timing(v))
                for k, v in payload.items()}
    if isinstance(payload, list):
        return [mask_timing(v) for v in payload]
    return payload


def masked_artifact_hash(path) -> str:
    """SHA-256 of a file; JSON files are hashed after timing masking."""
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        content = canonical_json(mask_timing(payload)).encode()
    else:
        content = path.read_bytes()
    return hashlib.sha256(content).hexdigest()


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration: every field populated, every path checked."""

    dataset: dict
    split: dict
    pipeline: dict
    models: dict
    training: dict
    evaluation: dict
    output_dir: str | None = None

    def as_dict(self) -> dict:
        return {
            "dataset": copy.deepcopy(self.dataset),
            "split": copy.deepcopy(self.split),
            "pipeline": copy.deepcopy(self.pipeline),
            "models": copy.deepcopy(self.models),
            "training": copy.deepcopy(self.training),
            "evaluation": copy.deepcopy(self.evaluation),
        }

    def config_hash(self) -> str:
        # The destination directory is not part of the experiment: two
        # runs into different folders must hash (and compare) equal.
        return hashlib.sha256(canonical_json(self.as_dict()).encode()).hexdigest()


def _merge_section(base: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}.{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge_section(base[key], value, f"{path}.{key}")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _validate_config(cfg: ExperimentConfig) -> None:
    ds = cfg.dataset
    if ds["kind"] not in ("synthetic", "csv"):
        raise ConfigError(f"dataset.kind must be synthetic or csv, got {ds['kind']!r}")
    if ds["kind"] == "csv":
        if not ds.get("path"):
            raise ConfigError("dataset.kind=csv requires dataset.path")
        if not Path(ds["path"]).exists():
            raise ConfigError(f"dataset path does not exist: {ds['path']}")
    if ds["normalization"] not in ("none", "minmax01", "zscore"):
        raise ConfigError("dataset.normalization must be none, minmax01 or zscore")
    if set(cfg.models.keys()) != set(MODEL_LABELS):
        raise ConfigError(
            f"models must define exactly {list(MODEL_LABELS)}, got {sorted(cfg.models)}")
    if not 0.0 < cfg.split["test_fraction"] < 1.0:
        raise ConfigError("split.test_fraction must lie in (0, 1)")
    nsr_list = cfg.evaluation["nsr_list"]
    if not isinstance(nsr_list, (list, tuple)) or any(v < 0 for v in nsr_list):
        raise ConfigError("evaluation.nsr_list must be a list of values >= 0")


def load_experiment_config(config_path=None, overrides=None) -> ExperimentConfig:
    """Merge defaults <- config file <- flag overrides, then validate.

    ``overrides`` uses dotted section paths, e.g.
    ``{"training.epochs": 5, "dataset.seed": 7}``.
    """
    merged = copy.deepcopy(DEFAULTS)
    output_dir = None
    if config_path is not None:
        try:
            payload = json.loads(Path(config_path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config root must be a JSON object")
        output_dir = payload.pop("output_dir", None)
        merged = _merge_section(merged, payload, "config")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = merged
        *parents, leaf = dotted.split(".")
        for part in parents:
            if part not in node:
                raise ConfigError(f"unknown config section {part!r}")
            node = node[part]
        if leaf not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[leaf] = value
    cfg = ExperimentConfig(
        dataset=merged["dataset"], split=merged["split"],
        pipeline=merged["pipeline"], models=merged["models"],
        training=merged["training"], evaluation=merged["evaluation"],
        output_dir=output_dir,
    )
    _validate_config(cfg)
    return cfg


def _resolve_output_dir(flag_value, cfg: ExperimentConfig) -> Path:
    # Precedence: --out flag, then config, then environment, then ./runs.
    candidate = (flag_value or cfg.output_dir
                 or os.environ.get(OUTPUT_DIR_ENV) or "runs")
    out = Path(candidate)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    """What a command produced: config identity, seeds and file hashes."""

    command: str
    config_hash: str
    seeds: dict
    tool_version: str
    started_at: str
    finished_at: str
    artifacts: list

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "seeds": dict(self.seeds),
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "artifacts": list(self.artifacts),
        }


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_manifest(out_dir: Path, command: str, cfg: ExperimentConfig,
                    started_at: str, artifact_paths) -> Path:
    artifacts = []
    for p in sorted(Path(p) for p in artifact_paths):
        artifacts.append({
            "path": p.name,
            "sha256": masked_artifact_hash(p),
        })
    manifest = RunManifest(
        command=command,
        config_hash=cfg.config_hash(),
        seeds={
            "dataset": cfg.dataset["seed"],
            "split": cfg.split["seed"],
            "training": cfg.training["seed"],
        },
        tool_version=__version__,
        started_at=started_at,
        finished_at=_utc_now(),
        artifacts=artifacts,
    )
    path = out_dir / "manifest.json"
    path.write_text(canonical_json(manifest.as_dict()))
    return path


# ---------------------------------------------------------------------------
# Pipeline building blocks
# ---------------------------------------------------------------------------

def _dataset_from_config(cfg: ExperimentConfig) -> Dataset:
    ds_cfg = cfg.dataset
    if ds_cfg["kind"] == "synthetic":
        ds = generate_synthetic(SyntheticConfig(
            n_samples=ds_cfg["n_samples"], n_features=ds_cfg["n_features"],
            true_rank=ds_cfg["true_rank"], noise_sigma=ds_cfg["noise_sigma"],
            n_classes=ds_cfg["n_classes"],
            class_separation=ds_cfg["class_separation"], seed=ds_cfg["seed"],
        ))
    else:
        ds = load_csv(ds_cfg["path"])
    if ds_cfg["normalization"] != "none":
        ds = normalize(ds, ds_cfg["normalization"])
    return ds


def _label_seed(label: str, base_seed: int) -> int:
    """Stable per-label stream: same label always trains on the same seed."""
    digest = hashlib.sha256(label.encode()).digest()
    return base_seed + int.from_bytes(digest[:4], "big")


def _build_estimator(label: str, cfg: ExperimentConfig):
    spec = cfg.models[label]
    t = cfg.training
    common = dict(
        hidden_dims=tuple(spec["hidden_dims"]),
        hidden_activation=spec["hidden_activation"],
        output_activation=spec["output_activation"],
        init_scale=spec["init_scale"],
        epochs=t["epochs"], batch_size=t["batch_size"],
        learning_rate=t["learning_rate"], recon_kind=t["recon_kind"],
        optimizer=t["optimizer"], val_fraction=t["val_fraction"],
        seed=_label_seed(label, t["seed"]), label=label,
    )
    if label == "vae_mdl":
        return MdlVae(
            latent_dim=spec["latent_dim"], beta=spec["beta"],
            use_mdl_preprocess=cfg.pipeline["use_mdl_preprocess"],
            latent_from_mdl=cfg.pipeline["latent_from_mdl"],
            mdl_rank=spec["mdl_rank"],
            standardize_codes=spec["standardize_codes"],
            **common,
        )
    return StandardAutoencoder(latent_dim=spec["latent_dim"], **common)


def _split_xy(ds: Dataset, cfg: ExperimentConfig):
    tr_idx, te_idx = split_indices(ds.n_samples, cfg.split["test_fraction"],
                                   cfg.split["seed"])
    labels = ds.labels
    return (ds.x[tr_idx], ds.x[te_idx],
            labels[tr_idx] if labels is not None else None,
            labels[te_idx] if labels is not None else None)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_generate(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    if cfg.dataset["kind"] != "synthetic":
        raise ConfigError("generate needs dataset.kind=synthetic")
    ds = _dataset_from_config(cfg)
    csv_path = out_dir / "dataset.csv"
    save_csv(ds, csv_path)
    return [csv_path, out_dir / "dataset.meta.json"]


def _cmd_compress(cfg: ExperimentConfig, out_dir: Path, args) -> list[Path]:
    if args.embeddings:
        table = EmbeddingTable.load(args.embeddings)
        x = table.matrix()
    else:
        x = _dataset_from_config(cfg).x
    scan = scan_description_lengths(x)
    rank = args.rank if args.rank is not None else select_rank(x)
    result = compress(x, rank)

    json_path = out_dir / "compression.json"
    result.save(json_path)
    scan_path = out_dir / "dl_scan.csv"
    lines = ["k,model_bits,data_bits,total_bits"]
    for k, dl in enumerate(scan, start=1):
        lines.append(f"{k},{dl.model_bits:.9g},{dl.data_bits:.9g},{dl.total_bits:.9g}")
    scan_path.write_text("\n".join(lines) + "\n")
    print(f"selected rank {rank} with {result.dl.total_bits:.1f} total bits")
    return [json_path, scan_path]


def _fit_on_train(label: str, cfg: ExperimentConfig):
    ds = _dataset_from_config(cfg)
    x_train, x_test, y_train, y_test = _split_xy(ds, cfg)
    est = _build_estimator(label, cfg)
    est.fit(x_train)
    return est, x_train, x_test, y_test


def _cmd_train(cfg: ExperimentConfig, out_dir: Path, args) -> list[Path]:
    from .autoencoder import save_model
    est, _, _, _ = _fit_on_train(args.model, cfg)
    model_path = out_dir / f"model_{args.model}.json"
    save_model(est.model_, model_path)
    history_path = out_dir / f"history_{args.model}.csv"
    est.history_.save_csv(history_path)
    if len(est.history_):
        final = est.history_.final()
        print(f"{args.model}: {len(est.history_)} epochs, "
              f"final train loss {final.train_loss:.6g}, val loss {final.val_loss:.6g}")
    else:
        print(f"{args.model}: 0 epochs (initialization only)")
    return [model_path, history_path]


def _cmd_evaluate(cfg: ExperimentConfig, out_dir: Path, args) -> list[Path]:
    est, _, x_test, y_test = _fit_on_train(args.model, cfg)
    recon = est.reconstruct(x_test)
    metrics = recon_metrics(x_test, recon)
    noise = {}
    for i, nsr in enumerate(cfg.evaluation["nsr_list"]):
        out = noise_robustness(est, x_test, float(nsr),
                               Rng(cfg.split["seed"] + 7919 * (i + 1)))
        noise[f"{float(nsr):g}"] = out["noise_error"]
    block = {
        "label": est.label,
        "metrics": metrics.as_dict(),
        "kl_mean": est.kl_mean(x_test),
        "train_loss": est.final_train_loss_,
        "test_loss": est.loss(x_test),
        "noise_error": noise,
        "inference_seconds": time_inference(
            est, x_test, repeats=cfg.evaluation["timing_repeats"]),
        "silhouette": (latent_silhouette(est.transform(x_test), y_test)
                       if y_test is not None else None),
        "latent_entropy": (latent_entropy(est.posterior(x_test)[1])
                           if hasattr(est, "posterior") else None),
    }
    path = out_dir / f"evaluation_{args.model}.json"
    path.write_text(canonical_json(block))
    print(f"{est.label}: test rmse {metrics.rmse:.6g}")
    return [path]


def _cmd_compare(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    from .autoencoder import save_model
    ds = _dataset_from_config(cfg)
    x_train, x_test, _, y_test = _split_xy(ds, cfg)
    artifacts = []
    fitted = {}
    for label in MODEL_LABELS:
        est = _build_estimator(label, cfg)
        est.fit(x_train)
        fitted[label] = est
        history_path = out_dir / f"history_{label}.csv"
        est.history_.save_csv(history_path)
        model_path = out_dir / f"model_{label}.json"
        save_model(est.model_, model_path)
        artifacts += [history_path, model_path]

    report = compare_models(
        fitted["vae_mdl"], fitted["standard_ae"], x_test, labels=y_test,
        nsr_list=cfg.evaluation["nsr_list"], seed=cfg.split["seed"],
        timing_repeats=cfg.evaluation["timing_repeats"],
    )
    json_path = out_dir / "comparison.json"
    report.save_json(json_path)
    csv_path = out_dir / "comparison.csv"
    report.save_csv(csv_path)
    a, b = report.models
    print(f"test rmse: {a.label} {a.metrics.rmse:.6g} vs {b.label} {b.metrics.rmse:.6g}")
    return artifacts + [json_path, csv_path]


def _cmd_report(args) -> None:
    source = Path(args.comparison) if args.comparison else None
    if source is None:
        out = args.out or os.environ.get(OUTPUT_DIR_ENV) or "runs"
        source = Path(out) / "comparison.json"
    if not source.exists():
        raise ConfigError(f"no comparison report at {source}")
    payload = json.loads(source.read_text())
    models = payload["models"]
    tests = payload["t_tests"]

    label_a = models[0]["label"]
    label_b = models[1]["label"]
    name_w = 19
    width = max(14, len(label_a) + 2, len(label_b) + 2)
    header = f"{'metric':<{name_w}}{label_a:>{width}}{label_b:>{width}}{'t':>12}{'p':>10}"
    print(header)
    print("-" * len(header))
    for name in ("mse", "mae", "rmse"):
        t_res = tests[name]
        if isinstance(t_res, str):
            t_txt, p_txt = t_res, t_res
        else:
            t_txt = f"{t_res['t']:.4f}"
            p_txt = f"{t_res['p_two_sided']:.4f}"
        va = models[0]["metrics"][name]
        vb = models[1]["metrics"][name]
        print(f"{name:<{name_w}}{va:>{width}.6f}{vb:>{width}.6f}{t_txt:>12}{p_txt:>10}")
    for extra in ("kl_mean", "train_loss", "test_loss", "inference_seconds"):
        va, vb = models[0].get(extra), models[1].get(extra)
        fa = f"{va:.6f}" if isinstance(va, (int, float)) else "-"
        fb = f"{vb:.6f}" if isinstance(vb, (int, float)) else "-"
        print(f"{extra:<{name_w}}{fa:>{width}}{fb:>{width}}")
    for model in models:
        for nsr, err in sorted(model.get("noise_error", {}).items()):
            row = f"noise@{nsr}"
            print(f"{row:<{name_w}}{model['label']:>{width}}{err:>{width}.6f}")


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdlvae",
        description="MDL-compressed variational autoencoder pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_DIR_ENV} or ./runs)")

    p_gen = sub.add_parser("generate", help="write a synthetic dataset CSV + sidecar")
    common(p_gen)
    p_gen.add_argument("--n-samples", type=int)
    p_gen.add_argument("--n-features", type=int)
    p_gen.add_argument("--true-rank", type=int)
    p_gen.add_argument("--noise-sigma", type=float)
    p_gen.add_argument("--n-classes", type=int)
    p_gen.add_argument("--class-separation", type=float)
    p_gen.add_argument("--seed", type=int, help="dataset seed")

    p_comp = sub.add_parser("compress", help="MDL rank selection and compression")
    common(p_comp)
    p_comp.add_argument("--data", help="dataset CSV to compress (overrides config dataset)")
    p_comp.add_argument("--embeddings", help="embedding table JSON to compress")
    p_comp.add_argument("--rank", type=int, help="force a rank instead of selecting")

    for name, extra in (("train", True), ("evaluate", True)):
        p = sub.add_parser(name, help=f"{name} one model on the configured dataset")
        common(p)
        p.add_argument("--model", choices=MODEL_LABELS, default="vae_mdl")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--learning-rate", type=float)
        p.add_argument("--seed", type=int, help="training seed")

    p_cmp = sub.add_parser("compare", help="full two-model pipeline and report")
    common(p_cmp)
    p_cmp.add_argument("--epochs", type=int)
    p_cmp.add_argument("--batch-size", type=int)
    p_cmp.add_argument("--learning-rate", type=float)
    p_cmp.add_argument("--seed", type=int, help="training seed")
    p_cmp.add_argument("--nsr", type=float, action="append",
                       help="noise-to-signal ratio (repeatable)")

    p_rep = sub.add_parser("report", help="print a text table from comparison.json")
    p_rep.add_argument("--out", help="directory containing comparison.json")
    p_rep.add_argument("--comparison", help="explicit comparison.json path")
    return parser


def _overrides_from_args(args) -> dict:
    mapping = {
        "n_samples": "dataset.n_samples",
        "n_features": "dataset.n_features",
        "true_rank": "dataset.true_rank",
        "noise_sigma": "dataset.noise_sigma",
        "n_classes": "dataset.n_classes",
        "class_separation": "dataset.class_separation",
        "epochs": "training.epochs",
        "batch_size": "training.batch_size",
        "learning_rate": "training.learning_rate",
    }
    overrides = {}
    for attr, dotted in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[dotted] = value
    seed = getattr(args, "seed", None)
    if seed is not None:
        overrides["dataset.seed" if args.command == "generate"
                  else "training.seed"] = seed
    if getattr(args, "nsr", None):
        overrides["evaluation.nsr_list"] = [float(v) for v in args.nsr]
    if getattr(args, "data", None):
        overrides["dataset.kind"] = "csv"
        overrides["dataset.path"] = args.data
    return overrides


def run_command(argv) -> int:
    """Parse argv and execute; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors
        return int(exc.code or 0)

    try:
        if args.command == "report":
            _cmd_report(args)
            return 0
        cfg = load_experiment_config(args.config, _overrides_from_args(args))
        out_dir = _resolve_output_dir(args.out, cfg)
        started_at = _utc_now()
        if args.command == "generate":
            artifacts = _cmd_generate(cfg, out_dir)
        elif args.command == "compress":
            artifacts = _cmd_compress(cfg, out_dir, args)
        elif args.command == "train":
            artifacts = _cmd_train(cfg, out_dir, args)
        elif args.command == "evaluate":
            artifacts = _cmd_evaluate(cfg, out_dir, args)
        else:
            artifacts = _cmd_compare(cfg, out_dir)
        _write_manifest(out_dir, args.command, cfg, started_at, artifacts)
        return 0
    except (MdlvaeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
