"""End-to-end glue: records -> profiles -> day tensors -> window samples ->
trained model bundle, plus the self-describing checkpoint format.

The profile mixture is fitted once on training-period records only (days
before the test window) and frozen afterwards, so validation and test
features never see future data.  Input normalization is likewise fitted on
training samples only and stored with the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import __version__
from .gridding import (
    ChannelNormalizer,
    GridSpec,
    WindowSample,
    build_day_tensors,
    build_label_grids,
    build_windows,
    extract_patches,
)
from .models import ModelConfig, Network, build_network, forward, predict_full_map, train
from .net.checkpoint import load_tensors, save_tensors
from .profiles import ProfileModel, fit_gmm, feature_dim
from .survey import encode_records

__all__ = [
    "SampleSet",
    "TrainedModel",
    "fit_profiles",
    "assemble_samples",
    "split_by_day",
    "train_model",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class SampleSet:
    """Windowed dataset on one grid: full-grid samples plus provenance."""

    samples: list
    spec: GridSpec
    profile_model: ProfileModel
    input_days: int
    horizon: int

    @property
    def target_days(self) -> list[int]:
        return sorted({s.target_date for s in self.samples})


def fit_profiles(records, k: int, max_iters: int = 100, tol: float = 1e-7, seed: int = 0,
                 before_day: int | None = None) -> ProfileModel:
    """Fit the responder mixture, optionally restricted to days before a cutoff."""
    pool = [r for r in records if before_day is None or r.date < before_day]
    if not pool:
        raise ValueError(f"no records before day {before_day} to fit profiles on")
    return fit_gmm(encode_records(pool), k, max_iters=max_iters, tol=tol, seed=seed)


def assemble_samples(records, spec: GridSpec, model: ProfileModel, n: int, k: int = 1) -> SampleSet:
    """Rasterize every day and slide windows; labels keep their observed masks."""
    tensors = build_day_tensors(records, spec, model)
    labels = build_label_grids(records, spec)
    samples = build_windows(tensors, labels, n=n, k=k)
    return SampleSet(samples=samples, spec=spec, profile_model=model, input_days=n, horizon=k)


def split_by_day(samples, test_day_count: int = 14):
    """Split samples into (pool, test) on the last ``test_day_count`` target days.

    Every pool sample's input and label days precede the first test target
    day, so no part of the test period leaks into training.
    """
    days = sorted({s.target_date for s in samples})
    test_days = set(days[-test_day_count:]) if test_day_count > 0 else set()
    test_start = min(test_days) if test_days else np.inf
    pool = [s for s in samples if s.target_date < test_start]
    test = [s for s in samples if s.target_date in test_days]
    for s in pool:
        assert max(s.input_dates) < test_start
    return pool, test


@dataclass
class TrainedModel:
    """A trained network plus everything needed to reuse it."""

    network: Network
    config: ModelConfig
    normalizer: ChannelNormalizer
    profile_model: ProfileModel
    history: list

    def predict(self, sample: WindowSample):
        scaled = self.normalizer.apply(sample)
        if self.config.patch is not None:
            return predict_full_map(self.network, scaled)
        return forward(self.network, scaled)


def train_model(train_samples, config: ModelConfig, profile_model: ProfileModel) -> TrainedModel:
    """Normalize, optionally patch, and train a fresh network."""
    if not train_samples:
        raise ValueError("no training samples")
    c_expected = train_samples[0].input.shape[0]
    if config.input_channels != c_expected:
        raise ValueError(
            f"config expects {config.input_channels} channels but samples carry {c_expected} "
            f"(profile model K={profile_model.k} gives {feature_dim(profile_model.k)})"
        )
    normalizer = ChannelNormalizer.fit(train_samples)
    scaled = normalizer.apply_all(train_samples)
    if config.patch is not None:
        ph, pw, stride = config.patch
        scaled = [p for s in scaled for p in extract_patches(s, (ph, pw), (stride, stride))]
        scaled = [p for p in scaled if p.label_mask.any()]
    network = build_network(config)
    masked = np.concatenate([s.label[s.label_mask] for s in scaled])
    network.init_output_head(float(masked.mean()), float(np.clip(masked.std(), 0.05, 0.5)))
    history = train(network, scaled, config)
    return TrainedModel(
        network=network,
        config=config,
        normalizer=normalizer,
        profile_model=profile_model,
        history=history,
    )


def predict(model: TrainedModel, sample: WindowSample):
    return model.predict(sample)


# ---------------------------------------------------------------------------
# checkpoints


def _config_to_meta(config: ModelConfig) -> dict:
    return {
        "mode": config.mode,
        "input_channels": config.input_channels,
        "input_days": config.input_days,
        "grid": list(config.grid),
        "patch": list(config.patch) if config.patch else None,
        "enc_channels": list(config.enc_channels),
        "latent": config.latent,
        "baseline_hidden": config.baseline_hidden,
        "lr": config.lr,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "seed": config.seed,
    }


def _config_from_meta(meta: dict) -> ModelConfig:
    return ModelConfig(
        mode=meta["mode"],
        input_channels=meta["input_channels"],
        input_days=meta["input_days"],
        grid=tuple(meta["grid"]),
        patch=tuple(meta["patch"]) if meta["patch"] else None,
        enc_channels=tuple(meta["enc_channels"]),
        latent=meta["latent"],
        baseline_hidden=meta["baseline_hidden"],
        lr=meta["lr"],
        epochs=meta["epochs"],
        batch_size=meta["batch_size"],
        seed=meta["seed"],
    )


def save_checkpoint(path, model: TrainedModel, extra_meta: dict | None = None):
    """Self-describing checkpoint: parameters, normalization, profile model."""
    tensors = dict(model.network.param_set.values())
    tensors["normalizer.mean"] = model.normalizer.mean
    tensors["normalizer.std"] = model.normalizer.std
    tensors["profiles.weights"] = model.profile_model.weights
    tensors["profiles.means"] = model.profile_model.means
    tensors["profiles.variances"] = model.profile_model.variances
    meta = {
        "format": "symptomcast-checkpoint",
        "version": __version__,
        "config": _config_to_meta(model.config),
        "profile_hash": model.profile_model.hash(),
        "history": [float(h) for h in model.history],
    }
    if extra_meta:
        meta.update(extra_meta)
    save_tensors(path, tensors, meta)


def load_checkpoint(path) -> TrainedModel:
    tensors, meta = load_tensors(path)
    if meta.get("format") != "symptomcast-checkpoint":
        raise ValueError(f"{path}: not a symptomcast checkpoint")
    config = _config_from_meta(meta["config"])
    network = build_network(config)
    params = {k: v for k, v in tensors.items() if k.startswith("layer")}
    network.param_set.load_values(params)
    normalizer = ChannelNormalizer(mean=tensors["normalizer.mean"], std=tensors["normalizer.std"])
    profile_model = ProfileModel(
        weights=tensors["profiles.weights"],
        means=tensors["profiles.means"],
        variances=tensors["profiles.variances"],
    )
    if profile_model.hash() != meta["profile_hash"]:
        raise ValueError(f"{path}: profile model hash mismatch")
    return TrainedModel(
        network=network,
        config=config,
        normalizer=normalizer,
        profile_model=profile_model,
        history=list(meta.get("history", [])),
    )
