"""Spatial binning onto a fixed grid, nearest-cell interpolation, day tensors,
sliding window assembly, patch extraction, and the flat grid file format.

One day's records are binned by location, aggregated per cell into profile
features, and empty cells are filled from the nearest observed cell, giving
a complete channels x rows x cols image.  Consecutive days stack into the
4D network input; the matching label is the per-cell mean severity of the
target day restricted to its observation mask (labels are never
interpolated).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .profiles import ProfileModel, aggregate_features, feature_dim
from .survey import compute_sra

__all__ = [
    "GridSpec",
    "DayTensor",
    "WindowSample",
    "GridDataError",
    "bin_records",
    "interpolate_empty_cells",
    "rasterize_day",
    "build_day_tensors",
    "build_label_grids",
    "build_windows",
    "extract_patches",
    "patch_corners",
    "regrid",
    "write_grid",
    "read_grid",
    "grid_to_pgm",
    "ChannelNormalizer",
]

log = logging.getLogger(__name__)


class GridDataError(ValueError):
    """Fatal gridding problem (no observations, bad file, bad spec)."""


@dataclass(frozen=True)
class GridSpec:
    """Fixed 2D grid: rows x cols cells over planar bounds.

    Cell (0, 0) sits at (x_min, y_min); the upper bounds clamp into the
    last row/column so binning is total on the closed box.
    """

    rows: int
    cols: int
    bounds: tuple[float, float, float, float]

    def __post_init__(self):
        x0, x1, y0, y1 = self.bounds
        if self.rows < 1 or self.cols < 1:
            raise GridDataError("grid must have at least one row and column")
        if not (x0 < x1 and y0 < y1):
            raise GridDataError(f"degenerate bounds {self.bounds!r}")

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        x0, x1, y0, y1 = self.bounds
        r = int((y - y0) / (y1 - y0) * self.rows)
        c = int((x - x0) / (x1 - x0) * self.cols)
        return min(r, self.rows - 1), min(c, self.cols - 1)

    def cell_centers(self):
        """Physical (x, y) center coordinates, each shaped (rows, cols)."""
        x0, x1, y0, y1 = self.bounds
        xs = x0 + (np.arange(self.cols) + 0.5) * (x1 - x0) / self.cols
        ys = y0 + (np.arange(self.rows) + 0.5) * (y1 - y0) / self.rows
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class DayTensor:
    """One day's feature image: (C, H, W) values plus the observation mask."""

    values: np.ndarray
    observed: np.ndarray
    day: int


@dataclass(frozen=True)
class WindowSample:
    """Network sample: (C, T, H, W) input, (H, W) label grid and mask.

    Input days are oldest first; the label is the severity grid of
    ``target_date`` masked to observed cells.
    """

    input: np.ndarray
    label: np.ndarray
    label_mask: np.ndarray
    target_date: int
    input_dates: tuple[int, ...]


def bin_records(records, spec: GridSpec):
    """Assign records to grid cells.

    Returns ``(cells, errors)`` where ``cells`` is an H x W nested list of
    record lists and ``errors`` collects records outside the bounds.
    """
    x0, x1, y0, y1 = spec.bounds
    cells = [[[] for _ in range(spec.cols)] for _ in range(spec.rows)]
    errors = []
    for rec in records:
        if not (x0 <= rec.x <= x1 and y0 <= rec.y <= y1):
            errors.append((rec, f"location ({rec.x}, {rec.y}) outside bounds"))
            continue
        r, c = spec.cell_of(rec.x, rec.y)
        cells[r][c].append(rec)
    return cells, errors


def interpolate_empty_cells(values: np.ndarray, observed: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Fill unobserved cells from the nearest observed cell.

    Distance is Euclidean between physical cell centers; exact ties pick
    the observed cell with the smallest (row, col) lexicographically.
    Observed cells pass through unchanged.
    """
    if not observed.any():
        raise GridDataError("cannot interpolate a day with zero observed cells")
    if observed.all():
        return values.copy()
    cx, cy = spec.cell_centers()
    obs_r, obs_c = np.nonzero(observed)  # row-major order: lexicographic tie winner first
    miss_r, miss_c = np.nonzero(~observed)
    d2 = (cx[miss_r, miss_c][:, None] - cx[obs_r, obs_c][None, :]) ** 2 + (
        cy[miss_r, miss_c][:, None] - cy[obs_r, obs_c][None, :]
    ) ** 2
    nearest = np.argmin(d2, axis=1)  # first minimum = lexicographic winner
    out = values.copy()
    out[:, miss_r, miss_c] = values[:, obs_r[nearest], obs_c[nearest]]
    return out


def rasterize_day(records, spec: GridSpec, model: ProfileModel, day: int) -> DayTensor:
    """Bin one day's records, aggregate profile features per cell, interpolate.

    Raises :class:`GridDataError` when the day has no in-bounds records.
    """
    cells, errors = bin_records(records, spec)
    for rec, why in errors:
        log.warning("day %d: dropping record: %s", day, why)
    c_dim = feature_dim(model.k)
    values = np.zeros((c_dim, spec.rows, spec.cols))
    observed = np.zeros((spec.rows, spec.cols), dtype=bool)
    for r in range(spec.rows):
        for c in range(spec.cols):
            if cells[r][c]:
                values[:, r, c] = aggregate_features(cells[r][c], model).vector
                observed[r, c] = True
    if not observed.any():
        raise GridDataError(f"day {day} has no observed cells")
    return DayTensor(values=interpolate_empty_cells(values, observed, spec), observed=observed, day=day)


def build_day_tensors(records, spec: GridSpec, model: ProfileModel) -> dict[int, DayTensor]:
    """Rasterize every day present in the record stream; empty days are dropped."""
    by_day: dict[int, list] = {}
    for rec in records:
        by_day.setdefault(rec.date, []).append(rec)
    tensors = {}
    for day in sorted(by_day):
        try:
            tensors[day] = rasterize_day(by_day[day], spec, model, day)
        except GridDataError as exc:
            log.warning("dropping day %d: %s", day, exc)
    return tensors


def build_label_grids(records, spec: GridSpec):
    """Per-day severity labels: cell mean of record severities, plus masks.

    Returns ``{day: (label, mask)}``; labels are meaningful only where the
    mask is true and are never interpolated.
    """
    by_day: dict[int, list] = {}
    for rec in records:
        by_day.setdefault(rec.date, []).append(rec)
    out = {}
    for day, recs in sorted(by_day.items()):
        total = np.zeros((spec.rows, spec.cols))
        count = np.zeros((spec.rows, spec.cols))
        cells, _ = bin_records(recs, spec)
        for r in range(spec.rows):
            for c in range(spec.cols):
                for rec in cells[r][c]:
                    total[r, c] += compute_sra(rec)
                    count[r, c] += 1
        mask = count > 0
        label = np.where(mask, total / np.maximum(count, 1), 0.0)
        out[day] = (label, mask)
    return out


def build_windows(
    tensors: dict[int, DayTensor],
    labels: dict[int, tuple],
    n: int,
    k: int = 1,
) -> list[WindowSample]:
    """Slide a window of ``n`` input days with horizon ``k`` over the data.

    A sample uses days ``[t, t + n)`` as input (oldest first) and day
    ``t + n + k - 1`` as the label.  Windows are only formed where all
    input days were rasterized and the label day has at least one observed
    cell.  Returns an empty list (with a warning) when no window fits.
    """
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 input days and horizon k >= 1")
    samples = []
    days = sorted(tensors)
    if days:
        for t in range(days[0], days[-1] + 1):
            input_days = [t + i for i in range(n)]
            target = t + n + k - 1
            if any(d not in tensors for d in input_days) or target not in labels:
                continue
            label, mask = labels[target]
            if not mask.any():
                continue
            assert max(input_days) < target  # no temporal leakage
            stacked = np.stack([tensors[d].values for d in input_days], axis=1)
            samples.append(
                WindowSample(
                    input=stacked,
                    label=label,
                    label_mask=mask,
                    target_date=target,
                    input_dates=tuple(input_days),
                )
            )
    if not samples:
        log.warning("too few consecutive days to build any window (n=%d, k=%d)", n, k)
    return samples


def patch_corners(size: int, patch: int, stride: int) -> list[int]:
    """Top-left offsets at stride multiples plus the edge-aligned final offset.

    ``stride`` may not exceed ``patch``: larger strides would leave gaps
    between consecutive patches, breaking full coverage.
    """
    if patch > size:
        raise ValueError(f"patch {patch} exceeds grid size {size}")
    if stride < 1 or stride > patch:
        raise ValueError(f"stride {stride} must be in [1, patch={patch}]")
    corners = list(range(0, size - patch + 1, stride))
    if corners[-1] != size - patch:
        corners.append(size - patch)
    return corners


def extract_patches(sample: WindowSample, patch: tuple[int, int], stride: tuple[int, int]):
    """Crop a sample into patches covering every pixel at least once."""
    h, w = patch
    rows = patch_corners(sample.label.shape[0], h, stride[0])
    cols = patch_corners(sample.label.shape[1], w, stride[1])
    out = []
    for r in rows:
        for c in cols:
            out.append(
                WindowSample(
                    input=sample.input[:, :, r : r + h, c : c + w],
                    label=sample.label[r : r + h, c : c + w],
                    label_mask=sample.label_mask[r : r + h, c : c + w],
                    target_date=sample.target_date,
                    input_dates=sample.input_dates,
                )
            )
    return out


def regrid(records, resolutions, model: ProfileModel, bounds):
    """Rebuild day tensors and labels at several resolutions from one stream."""
    out = {}
    for rows, cols in resolutions:
        spec = GridSpec(rows=rows, cols=cols, bounds=bounds)
        out[(rows, cols)] = (
            build_day_tensors(records, spec, model),
            build_label_grids(records, spec),
            spec,
        )
    return out


# ---------------------------------------------------------------------------
# per-channel normalization (fitted on training inputs only)


@dataclass(frozen=True)
class ChannelNormalizer:
    """Per-channel z-normalization for network inputs."""

    mean: np.ndarray  # (C,)
    std: np.ndarray  # (C,)

    @classmethod
    def fit(cls, samples) -> "ChannelNormalizer":
        if not samples:
            raise ValueError("cannot fit a normalizer on zero samples")
        stacked = np.stack([s.input for s in samples])  # (N, C, T, H, W)
        mean = stacked.mean(axis=(0, 2, 3, 4))
        std = np.maximum(stacked.std(axis=(0, 2, 3, 4)), 1e-8)
        return cls(mean=mean, std=std)

    def apply(self, sample: WindowSample) -> WindowSample:
        scaled = (sample.input - self.mean[:, None, None, None]) / self.std[:, None, None, None]
        return WindowSample(
            input=scaled,
            label=sample.label,
            label_mask=sample.label_mask,
            target_date=sample.target_date,
            input_dates=sample.input_dates,
        )

    def apply_all(self, samples):
        return [self.apply(s) for s in samples]


# ---------------------------------------------------------------------------
# flat binary grid format: magic "SGRD", version, C, T, H, W, float32 LE data


_SGRD_MAGIC = b"SGRD"
_SGRD_VERSION = 1


def write_grid(path, array: np.ndarray):
    """Write a grid as little-endian float32 with an SGRD header.

    Accepts (H, W), (C, H, W), or (C, T, H, W); lower ranks are stored with
    singleton leading dimensions.
    """
    a = np.asarray(array, dtype=np.float64)
    if a.ndim == 2:
        a = a[None, None]
    elif a.ndim == 3:
        a = a[:, None]
    elif a.ndim != 4:
        raise GridDataError(f"grid rank must be 2..4, got {a.ndim}")
    c, t, h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(_SGRD_MAGIC)
        fh.write(struct.pack("<5I", _SGRD_VERSION, c, t, h, w))
        fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_grid(path) -> np.ndarray:
    """Read an SGRD file; returns a float64 (C, T, H, W) array."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _SGRD_MAGIC:
            raise GridDataError(f"{path}: not an SGRD grid file")
        version, c, t, h, w = struct.unpack("<5I", fh.read(20))
        if version != _SGRD_VERSION:
            raise GridDataError(f"{path}: unsupported SGRD version {version}")
        data = np.frombuffer(fh.read(4 * c * t * h * w), dtype="<f4")
    if data.size != c * t * h * w:
        raise GridDataError(f"{path}: truncated grid data")
    return data.astype(np.float64).reshape(c, t, h, w)


def grid_to_pgm(grid: np.ndarray) -> tuple[str, float, float]:
    """Render a 2D grid as a plain-ASCII P2 portable graymap.

    Values are scaled linearly from [min, max] to [0, 255]; a constant grid
    maps to all zeros.  Returns ``(pgm_text, vmin, vmax)``.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise GridDataError(f"PGM rendering needs a 2D grid, got rank {g.ndim}")
    vmin, vmax = float(g.min()), float(g.max())
    if vmax > vmin:
        scaled = np.rint((g - vmin) / (vmax - vmin) * 255.0).astype(int)
    else:
        scaled = np.zeros_like(g, dtype=int)
    lines = [f"P2", f"{g.shape[1]} {g.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in scaled]
    return "\n".join(lines) + "\n", vmin, vmax
