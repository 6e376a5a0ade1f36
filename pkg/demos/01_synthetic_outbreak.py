"""Generate a synthetic survey stream with a moving outbreak and look at it.

The generator plants Gaussian intensity hotspots that random-walk across
the map; responders draw symptoms as Bernoulli(propensity * intensity).
The ground-truth intensity field comes back alongside the records, so we
can check that observed severity tracks it.
"""

import numpy as np

from symptomcast.gridding import GridSpec, bin_records, grid_to_pgm
from symptomcast.survey import SyntheticConfig, compute_sra, generate_synthetic

config = SyntheticConfig(days=30, responses_per_day=400, n_hotspots=2, seed=7)
records, field = generate_synthetic(config)
print(f"{len(records)} responses over {config.days} days")

sras = np.array([compute_sra(r) for r in records])
print(f"severity: mean {sras.mean():.3f}, std {sras.std():.3f}")

# per-cell mean severity on day 15 vs the true intensity
spec = GridSpec(rows=12, cols=12, bounds=config.grid_bounds)
day = 15
cells, _ = bin_records([r for r in records if r.date == day], spec)
severity = np.zeros((12, 12))
for r in range(12):
    for c in range(12):
        if cells[r][c]:
            severity[r, c] = np.mean([compute_sra(x) for x in cells[r][c]])

lam = field.to_grid(12, 12)[day]
observed = severity > 0
corr = np.corrcoef(severity[observed], lam[observed])[0, 1]
print(f"day {day}: corr(cell severity, true intensity) = {corr:.2f}")

for name, grid in (("intensity", lam), ("severity", severity)):
    pgm, vmin, vmax = grid_to_pgm(grid)
    path = f"demo01_{name}.pgm"
    with open(path, "w") as fh:
        fh.write(pgm)
    print(f"wrote {path} (range {vmin:.3f}..{vmax:.3f})")
