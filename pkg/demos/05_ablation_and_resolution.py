"""Small-scale versions of the two headline experiments.

First the model-component comparison (fully connected baseline, raw
features, profile features, with and without patching), then severity
forecasting skill as a function of grid resolution, which trades spatial
detail against per-cell data volume.  Expect several minutes of training.
"""

from symptomcast.evaluation import ablation_run, resolution_sweep
from symptomcast.gridding import GridSpec
from symptomcast.models import ModelConfig
from symptomcast.survey import SyntheticConfig, generate_synthetic

config = SyntheticConfig(days=40, responses_per_day=300, seed=21)
records, _ = generate_synthetic(config)
spec = GridSpec(rows=16, cols=16, bounds=config.grid_bounds)

base = ModelConfig(mode="full", input_channels=64, grid=(16, 16), patch=(10, 10, 5),
                   epochs=30, batch_size=8, lr=1e-4, seed=0)

print("model-component comparison (3 folds):")
for row in ablation_run(records, spec, base, gmm_k=4, folds=3, seeds=(0,), test_day_count=10):
    print(f"  {row.variant:14s} R2 {row.r2:+.3f} ± {row.sem_r2:.3f}   "
          f"SC {row.spearman:+.3f} ± {row.sem_spearman:.3f}")

print("\nresolution sweep (2 folds per point):")
points = resolution_sweep(records, [(1, 1), (6, 6), (12, 12), (20, 20), (28, 28)],
                          config.grid_bounds, base, gmm_k=4, folds=2, test_day_count=10)
for p in points:
    print(f"  {p.rows:2d}x{p.cols:<2d} ({p.bins:3d} bins)  R2 {p.r2:+.3f} ± {p.sem_r2:.3f}")
best = max(points, key=lambda p: p.r2)
print(f"best resolution: {best.rows}x{best.cols} ({best.bins} bins)")
