"""Evaluation protocol: metrics, leakage-free time-blocked cross-validation,
the model-component ablation, and the input-resolution sweep.

Metrics pool the masked pixels of all evaluated windows jointly.  Folds are
contiguous blocks of target days in forward-chaining order: fold i trains
on everything strictly before its validation block, so training never sees
a day at or after any validation target.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .gridding import GridSpec, WindowSample
from .models import ModelConfig
from .pipeline import SampleSet, assemble_samples, fit_profiles, split_by_day, train_model

__all__ = [
    "Metrics",
    "SplitPlan",
    "r2_score",
    "spearman_corr",
    "make_split",
    "evaluate_model",
    "cross_validate",
    "shuffle_labels_in_time",
    "ablation_run",
    "resolution_sweep",
    "ABLATION_VARIANTS",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# metrics


def r2_score(pred, target) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot.

    A constant target makes the score undefined; it is reported as NaN with
    a warning rather than silently coerced to 0.
    """
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.size != t.size or p.size < 2:
        raise ValueError(f"need two aligned vectors of >= 2 values, got {p.size} and {t.size}")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        warnings.warn("r2_score: constant target, score undefined", stacklevel=2)
        return float("nan")
    return 1.0 - float(np.sum((p - t) ** 2)) / ss_tot


def _average_ranks(a: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_corr(pred, target) -> float:
    """Pearson correlation of average-ranked values (ties get mean ranks)."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.size != t.size or p.size < 2:
        raise ValueError(f"need two aligned vectors of >= 2 values, got {p.size} and {t.size}")
    rp = _average_ranks(p)
    rt = _average_ranks(t)
    sp = rp.std()
    st = rt.std()
    if sp == 0.0 or st == 0.0:
        warnings.warn("spearman_corr: constant ranks, correlation undefined", stacklevel=2)
        return float("nan")
    return float(np.mean((rp - rp.mean()) * (rt - rt.mean())) / (sp * st))


@dataclass(frozen=True)
class Metrics:
    r2: float
    spearman: float
    sem_r2: float
    sem_spearman: float
    n_pixels: int


def _mean_sem(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def aggregate_metrics(per_fold: list[Metrics]) -> Metrics:
    r2_mean, r2_sem = _mean_sem([m.r2 for m in per_fold])
    sc_mean, sc_sem = _mean_sem([m.spearman for m in per_fold])
    return Metrics(
        r2=r2_mean,
        spearman=sc_mean,
        sem_r2=r2_sem,
        sem_spearman=sc_sem,
        n_pixels=sum(m.n_pixels for m in per_fold),
    )


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitPlan:
    """Forward-chaining fold memberships over the cross-validation pool."""

    test_days: tuple[int, ...]
    folds: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]  # (train_idx, val_idx) pairs

    def check_no_leakage(self, samples):
        for train_idx, val_idx in self.folds:
            if not train_idx or not val_idx:
                continue
            train_max = max(
                max(max(samples[i].input_dates), samples[i].target_date) for i in train_idx
            )
            val_min = min(samples[i].target_date for i in val_idx)
            if train_max >= val_min:
                raise AssertionError(
                    f"temporal leakage: train day {train_max} >= validation target {val_min}"
                )


def make_split(samples, folds: int, test_day_count: int = 0) -> SplitPlan:
    """Partition target days into ``folds + 1`` contiguous blocks.

    Fold i trains on samples whose target day falls in blocks [0, i] and
    validates on block i + 1.  ``test_day_count`` only records which days
    were reserved; callers split the test set off beforehand.
    """
    if folds < 1:
        raise ValueError("folds must be >= 1")
    if len(samples) < folds * 2:
        raise ValueError(f"need at least {folds * 2} samples for {folds} folds, got {len(samples)}")
    days = sorted({s.target_date for s in samples})
    blocks = np.array_split(np.asarray(days), folds + 1)
    fold_list = []
    for i in range(folds):
        train_days = set(np.concatenate(blocks[: i + 1]).tolist())
        val_days = set(blocks[i + 1].tolist())
        train_idx = tuple(j for j, s in enumerate(samples) if s.target_date in train_days)
        val_idx = tuple(j for j, s in enumerate(samples) if s.target_date in val_days)
        fold_list.append((train_idx, val_idx))
    plan = SplitPlan(test_days=(), folds=tuple(fold_list))
    plan.check_no_leakage(samples)
    return plan


# ---------------------------------------------------------------------------
# model evaluation


def evaluate_model(model, samples) -> Metrics:
    """Pooled metrics of a trained model over full-grid samples.

    Point forecasts are the truncated-distribution means, which always lie
    inside [0, 1] even when the location parameter wanders outside.
    """
    preds, targets = [], []
    n_px = 0
    for s in samples:
        grid = model.predict(s)
        preds.append(grid.point_estimate()[s.label_mask])
        targets.append(s.label[s.label_mask])
        n_px += int(s.label_mask.sum())
    p = np.concatenate(preds)
    t = np.concatenate(targets)
    return Metrics(
        r2=r2_score(p, t),
        spearman=spearman_corr(p, t),
        sem_r2=0.0,
        sem_spearman=0.0,
        n_pixels=n_px,
    )


def cross_validate(sample_set: SampleSet, config: ModelConfig, folds: int, seed_offset: int = 0):
    """Train/evaluate over forward-chaining folds.

    Returns ``(per_fold_metrics, aggregate)``; fold f uses network seed
    ``config.seed + seed_offset + f`` so folds differ but reruns do not.
    """
    samples = sample_set.samples
    plan = make_split(samples, folds)
    per_fold = []
    for f, (train_idx, val_idx) in enumerate(plan.folds):
        if not train_idx or not val_idx:
            log.warning("fold %d skipped: empty train or validation block", f)
            continue
        fold_config = replace(config, seed=config.seed + seed_offset + f)
        model = train_model([samples[i] for i in train_idx], fold_config, sample_set.profile_model)
        metrics = evaluate_model(model, [samples[i] for i in val_idx])
        if not np.isfinite(metrics.r2):
            log.warning("fold %d skipped: undefined metrics (constant target)", f)
            continue
        per_fold.append(metrics)
    return per_fold, aggregate_metrics(per_fold)


def shuffle_labels_in_time(samples, seed: int = 0):
    """Permute (label, mask) pairs across samples; destroys real skill."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(samples))
    return [
        WindowSample(
            input=s.input,
            label=samples[j].label,
            label_mask=samples[j].label_mask,
            target_date=s.target_date,
            input_dates=s.input_dates,
        )
        for s, j in zip(samples, perm)
    ]


# ---------------------------------------------------------------------------
# ablation (model components) and resolution sweep


ABLATION_VARIANTS = ("baseline_fc", "raw_features", "full_images", "full_patched")


@dataclass(frozen=True)
class AblationRow:
    variant: str
    r2: float
    sem_r2: float
    spearman: float
    sem_spearman: float
    folds: int


def _variant_config(variant: str, base: ModelConfig, c_full: int, patch) -> ModelConfig:
    if variant == "baseline_fc":
        return replace(base, mode="baseline_fc", input_channels=c_full, patch=None)
    if variant == "raw_features":
        return replace(base, mode="raw_features", input_channels=16, patch=patch)
    if variant == "full_images":
        return replace(base, mode="full", input_channels=c_full, patch=None)
    if variant == "full_patched":
        return replace(base, mode="full", input_channels=c_full, patch=patch)
    raise ValueError(f"unknown ablation variant {variant!r}")


def ablation_run(
    records,
    spec: GridSpec,
    base_config: ModelConfig,
    *,
    gmm_k: int = 4,
    folds: int = 3,
    seeds=(0,),
    test_day_count: int = 14,
    horizon: int = 1,
    variants=ABLATION_VARIANTS,
):
    """Train every model variant on identical splits and seeds.

    The raw-features variant re-rasterizes with a single-profile mixture
    (per-question averaging); convolutional variants share the K-profile
    rasterization.  Returns the comparison rows in ``variants`` order.
    """
    pools = {}
    for k_profiles, key in ((gmm_k, "full"), (1, "raw")):
        model = fit_profiles(records, k_profiles, seed=base_config.seed,
                             before_day=_gmm_cutoff(records, spec, test_day_count))
        sample_set = assemble_samples(records, spec, model, base_config.input_days, horizon)
        pool, _ = split_by_day(sample_set.samples, test_day_count)
        pools[key] = SampleSet(
            samples=pool,
            spec=spec,
            profile_model=model,
            input_days=sample_set.input_days,
            horizon=sample_set.horizon,
        )

    c_full = pools["full"].samples[0].input.shape[0]
    patch = base_config.patch
    rows = []
    for variant in variants:
        cfg = _variant_config(variant, base_config, c_full, patch)
        pool = pools["raw" if variant == "raw_features" else "full"]
        fold_metrics = []
        for s_i, seed in enumerate(seeds):
            per_fold, _ = cross_validate(pool, replace(cfg, seed=seed), folds, seed_offset=1000 * s_i)
            fold_metrics.extend(per_fold)
        agg = aggregate_metrics(fold_metrics)
        rows.append(
            AblationRow(
                variant=variant,
                r2=agg.r2,
                sem_r2=agg.sem_r2,
                spearman=agg.spearman,
                sem_spearman=agg.sem_spearman,
                folds=len(fold_metrics),
            )
        )
    return rows


def _gmm_cutoff(records, spec: GridSpec, test_day_count: int):
    """First test-period day: profile fitting must stay strictly before it."""
    if test_day_count <= 0:
        return None
    days = sorted({r.date for r in records})
    if len(days) <= test_day_count:
        raise ValueError(f"not enough days ({len(days)}) to reserve {test_day_count} for testing")
    return days[-test_day_count]


@dataclass(frozen=True)
class SweepPoint:
    rows: int
    cols: int
    bins: int
    r2: float
    sem_r2: float
    folds: int


def resolution_sweep(
    records,
    resolutions,
    bounds,
    base_config: ModelConfig,
    *,
    gmm_k: int = 4,
    folds: int = 3,
    test_day_count: int = 14,
    n: int = 3,
    k: int = 1,
):
    """Re-run the whole pipeline per grid resolution; returns one row each.

    Patching is disabled: the swept grids include sizes smaller than any
    useful patch.
    """
    if len(resolutions) < 3:
        raise ValueError("resolution sweep needs at least 3 resolutions")
    points = []
    for rows, cols in resolutions:
        spec = GridSpec(rows=rows, cols=cols, bounds=bounds)
        model = fit_profiles(records, gmm_k, seed=base_config.seed,
                             before_day=_gmm_cutoff(records, spec, test_day_count))
        sample_set = assemble_samples(records, spec, model, n, k)
        pool, _ = split_by_day(sample_set.samples, test_day_count)
        pool_set = SampleSet(samples=pool, spec=spec, profile_model=model, input_days=n, horizon=k)
        c = pool[0].input.shape[0]
        cfg = replace(base_config, mode="full", input_channels=c, grid=(rows, cols), patch=None)
        per_fold, agg = cross_validate(pool_set, cfg, folds)
        points.append(
            SweepPoint(rows=rows, cols=cols, bins=rows * cols, r2=agg.r2, sem_r2=agg.sem_r2,
                       folds=len(per_fold))
        )
    return points
