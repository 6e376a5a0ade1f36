"""Plain key=value run configuration: one assignment per line, ``#`` comments.

Every pipeline knob lives here so a single file drives generation, profile
fitting, training, and evaluation; unknown keys are rejected and the raw
text is echoed verbatim into output manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .models import ModelConfig
from .survey import N_SYMPTOMS, SyntheticConfig, default_profile_mix

__all__ = ["RunConfig", "ConfigError", "parse_config_text", "load_config"]


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass
class RunConfig:
    """Flat run configuration covering the whole pipeline."""

    seed: int = 0
    # synthetic stream
    days: int = 50
    responses_per_day: int = 300
    n_hotspots: int = 2
    hotspot_drift: float = 0.05
    hotspot_width: float = 0.22
    hotspot_amplitude: float = 3.0
    mix_tilt: float = 0.3
    response_lag: str = "0,1,2"
    profile_weights: str = ""  # optional CSV of floats; empty = built-in mix
    profile_propensities: str = ""  # optional; ';'-separated rows of 9 CSV floats
    # grid
    grid_rows: int = 20
    grid_cols: int = 20
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0
    # profiles
    gmm_k: int = 4
    gmm_max_iters: int = 100
    gmm_tol: float = 1e-7
    # windows
    input_days: int = 3
    horizon: int = 1
    # model
    mode: str = "full"
    patch_rows: int = 10  # 0 disables patching
    patch_cols: int = 10
    patch_stride: int = 10
    enc1: int = 16
    enc2: int = 32
    latent: int = 128
    baseline_hidden: int = 256
    lr: float = 1e-4
    epochs: int = 80
    batch_size: int = 8
    # evaluation
    test_days: int = 14
    folds: int = 3
    # provenance
    raw_text: str = field(default="", repr=False)

    def validate(self):
        if self.mode not in ("full", "raw_features", "baseline_fc"):
            raise ConfigError(f"mode must be full, raw_features, or baseline_fc, not {self.mode!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError("bounds must satisfy x_min < x_max and y_min < y_max")
        for name in ("days", "responses_per_day", "grid_rows", "grid_cols", "gmm_k",
                     "input_days", "horizon", "batch_size", "folds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0 or self.test_days < 0 or self.n_hotspots < 0:
            raise ConfigError("epochs, test_days, and n_hotspots must be >= 0")
        if self.patch_rows < 0 or self.patch_cols < 0 or self.patch_stride < 0:
            raise ConfigError("patch dimensions must be >= 0 (0 disables patching)")
        if bool(self.patch_rows) != bool(self.patch_cols):
            raise ConfigError("patch_rows and patch_cols must both be 0 or both be set")
        if self.patch_rows and (self.patch_rows > self.grid_rows or self.patch_cols > self.grid_cols):
            raise ConfigError("patch does not fit the grid")
        if self.patch_rows and self.patch_stride < 1:
            raise ConfigError("patch_stride must be >= 1 when patching is on")
        self.synthetic_config()  # validates mix fields

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def patch(self) -> tuple[int, int, int] | None:
        if self.patch_rows == 0:
            return None
        return (self.patch_rows, self.patch_cols, self.patch_stride)

    def profile_mix(self):
        if not self.profile_weights:
            return default_profile_mix(self.gmm_k)
        try:
            weights = [float(v) for v in self.profile_weights.split(",")]
            rows = [
                [float(v) for v in row.split(",")]
                for row in self.profile_propensities.split(";")
            ]
        except ValueError as exc:
            raise ConfigError(f"bad profile mix: {exc}") from None
        if len(rows) != len(weights):
            raise ConfigError("profile_weights and profile_propensities disagree on count")
        if any(len(r) != N_SYMPTOMS for r in rows):
            raise ConfigError(f"each propensity row needs {N_SYMPTOMS} values")
        return [(w, np.asarray(r)) for w, r in zip(weights, rows)]

    def synthetic_config(self) -> SyntheticConfig:
        try:
            lags = tuple(int(v) for v in self.response_lag.split(","))
        except ValueError:
            raise ConfigError(f"bad response_lag {self.response_lag!r}") from None
        cfg = SyntheticConfig(
            days=self.days,
            grid_bounds=self.bounds,
            responses_per_day=self.responses_per_day,
            n_hotspots=self.n_hotspots,
            hotspot_drift=self.hotspot_drift,
            hotspot_width=self.hotspot_width,
            hotspot_amplitude=self.hotspot_amplitude,
            mix_tilt=self.mix_tilt,
            response_lag=lags,
            profile_mix=self.profile_mix(),
            seed=self.seed,
        )
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def model_config(self, input_channels: int) -> ModelConfig:
        return ModelConfig(
            mode=self.mode,
            input_channels=input_channels,
            input_days=self.input_days,
            grid=(self.grid_rows, self.grid_cols),
            patch=self.patch if self.mode != "baseline_fc" else None,
            enc_channels=(self.enc1, self.enc2),
            latent=self.latent,
            baseline_hidden=self.baseline_hidden,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig) if f.name != "raw_text"}


def parse_config_text(text: str) -> RunConfig:
    """Parse key=value lines into a validated :class:`RunConfig`."""
    cfg = RunConfig(raw_text=text)
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw_line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            if kind == "int":
                setattr(cfg, key, int(value))
            elif kind == "float":
                setattr(cfg, key, float(value))
            else:
                setattr(cfg, key, value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())
