"""From records to network samples: binning, interpolation, window stacking.

Every day becomes a channels x H x W image (profile features per cell,
empty cells filled from the nearest observed cell).  Three consecutive
days stack into the 4D input; the next day's per-cell mean severity is
the label, masked to cells that actually received responses.
"""

import numpy as np

from symptomcast.gridding import GridSpec, build_day_tensors, build_label_grids, build_windows, extract_patches
from symptomcast.pipeline import fit_profiles
from symptomcast.survey import SyntheticConfig, generate_synthetic

config = SyntheticConfig(days=12, responses_per_day=250, seed=5)
records, _ = generate_synthetic(config)
spec = GridSpec(rows=14, cols=14, bounds=config.grid_bounds)

model = fit_profiles(records, k=4, seed=0)
tensors = build_day_tensors(records, spec, model)
labels = build_label_grids(records, spec)

day0 = tensors[0]
print(f"day tensor: {day0.values.shape[0]} channels x {day0.values.shape[1]} x {day0.values.shape[2]}")
print(f"observed cells day 0: {day0.observed.sum()} of {spec.rows * spec.cols}")

samples = build_windows(tensors, labels, n=3, k=1)
print(f"\n{len(samples)} window samples (3 input days, next-day label)")
s = samples[0]
print(f"sample 0: input {s.input.shape}, label day {s.target_date}, "
      f"{s.label_mask.sum()} labelled cells")
assert max(s.input_dates) < s.target_date  # inputs never touch the label day

patches = extract_patches(s, patch=(10, 10), stride=(5, 5))
print(f"10x10 patches at stride 5: {len(patches)} per sample, all pixels covered")
