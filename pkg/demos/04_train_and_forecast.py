"""Train the spatio-temporal forecaster and render a next-day severity map.

The encoder-decoder eats three days of profile-feature images and emits a
truncated-Gaussian (location, scale) pair per cell; training maximizes the
truncated likelihood of observed severities.  Takes a minute or two.
"""

import numpy as np

from symptomcast.evaluation import evaluate_model
from symptomcast.gridding import GridSpec, grid_to_pgm
from symptomcast.models import ModelConfig
from symptomcast.pipeline import assemble_samples, fit_profiles, split_by_day, train_model
from symptomcast.survey import SyntheticConfig, generate_synthetic

config = SyntheticConfig(days=35, responses_per_day=300, seed=11)
records, _ = generate_synthetic(config)
spec = GridSpec(rows=12, cols=12, bounds=config.grid_bounds)

test_days = 7
profile_model = fit_profiles(records, k=4, seed=0, before_day=config.days - test_days)
sample_set = assemble_samples(records, spec, profile_model, n=3, k=1)
train_samples, test_samples = split_by_day(sample_set.samples, test_days)
print(f"{len(train_samples)} training windows, {len(test_samples)} test windows")

model_config = ModelConfig(
    mode="full",
    input_channels=train_samples[0].input.shape[0],
    grid=(12, 12),
    epochs=40,
    batch_size=8,
    lr=1e-4,
    seed=0,
)
model = train_model(train_samples, model_config, profile_model)
print(f"training NLL: {model.history[0]:.4f} -> {model.history[-1]:.4f}")

metrics = evaluate_model(model, test_samples)
print(f"held-out: R2 {metrics.r2:+.3f}, spearman {metrics.spearman:+.3f} "
      f"({metrics.n_pixels} observed cells)")

grid = model.predict(test_samples[-1])
forecast = grid.point_estimate()
pgm, vmin, vmax = grid_to_pgm(forecast)
with open("demo04_forecast.pgm", "w") as fh:
    fh.write(pgm)
print(f"wrote demo04_forecast.pgm for day {test_samples[-1].target_date} "
      f"(severity {vmin:.3f}..{vmax:.3f})")
