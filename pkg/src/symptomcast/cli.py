"""Command-line surface.

Subcommands: generate, fit-profiles, train, eval, ablate, sweep, predict,
render.  Exit codes: 0 ok, 2 usage, 3 config, 4 data, 5 numeric failure.
All outputs are deterministic under the config seed; every report is
accompanied by a ``<report>.manifest`` echoing the config, seeds, and the
package version.  ``SYMPTOMCAST_THREADS`` caps BLAS parallelism (default 1
so reruns are bit-identical).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .evaluation import ablation_run, evaluate_model, resolution_sweep
from .gridding import GridDataError, GridSpec, grid_to_pgm, read_grid, write_grid
from .models import ModelConfig, NumericError
from .pipeline import (
    assemble_samples,
    fit_profiles,
    load_checkpoint,
    save_checkpoint,
    split_by_day,
    train_model,
)
from .profiles import load_profile_model, save_profile_model
from .survey import (
    SurveyDataError,
    generate_synthetic,
    parse_survey_csv,
    serialize_survey_csv,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5


class DataError(RuntimeError):
    pass


def _fail(code: int, message: str) -> int:
    print(f"error code={code} message={message!r}", file=sys.stderr)
    return code


def _load_records(path):
    try:
        with open(path, encoding="utf-8") as fh:
            records, errors = parse_survey_csv(fh)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    for err in errors:
        print(f"warning: {path} row {err.row}: {err.reason}", file=sys.stderr)
    if not records:
        raise DataError(f"{path}: no valid records")
    return records


def _write_manifest(report_path, config: RunConfig | None, extra: dict):
    lines = [f"version = symptomcast-{__version__}"]
    for key, value in extra.items():
        lines.append(f"{key} = {value}")
    if config is not None:
        lines.append("--- config echo ---")
        lines.append(config.raw_text.rstrip("\n"))
    with open(f"{report_path}.manifest", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_csv(path, header: list[str], rows: list[list]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _prepare_samples(records, cfg: RunConfig, profile_model):
    spec = GridSpec(rows=cfg.grid_rows, cols=cfg.grid_cols, bounds=cfg.bounds)
    return assemble_samples(records, spec, profile_model, cfg.input_days, cfg.horizon)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    records, field = generate_synthetic(cfg.synthetic_config())
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_survey_csv(records))
    lam = field.to_grid(cfg.grid_rows, cfg.grid_cols)  # (days, H, W)
    lam_path = f"{args.out}.lambda.sgrd"
    write_grid(lam_path, lam[None])  # C=1, T=days
    _write_manifest(args.out, cfg, {"records": len(records), "lambda_grid": lam_path})
    print(f"wrote {len(records)} records to {args.out}; intensity grid to {lam_path}")
    return EXIT_OK


def cmd_fit_profiles(args) -> int:
    records = _load_records(args.data)
    model = fit_profiles(records, args.k, seed=args.seed)
    save_profile_model(model, args.out)
    print(f"fitted {model.k}-profile model on {len(records)} records -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    records = _load_records(args.data)
    try:
        profile_model = load_profile_model(args.profiles)
    except FileNotFoundError:
        raise DataError(f"{args.profiles}: no such file") from None
    sample_set = _prepare_samples(records, cfg, profile_model)
    pool, _ = split_by_day(sample_set.samples, cfg.test_days)
    if not pool:
        raise DataError("no training samples outside the test window")
    c = pool[0].input.shape[0]
    model_cfg = cfg.model_config(input_channels=c)
    model = train_model(pool, model_cfg, profile_model)
    save_checkpoint(
        args.out,
        model,
        extra_meta={
            "bounds": list(cfg.bounds),
            "horizon": cfg.horizon,
            "test_days": cfg.test_days,
        },
    )
    _write_csv(
        f"{args.out}.loss.csv",
        ["epoch", "nll"],
        [[i + 1, float(v)] for i, v in enumerate(model.history)],
    )
    _write_manifest(args.out, cfg, {"train_samples": len(pool), "checkpoint": args.out})
    print(f"trained on {len(pool)} windows -> {args.out} (final nll {model.history[-1]:.4f})")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    records = _load_records(args.data)
    _, meta = _checkpoint_meta(args.checkpoint)
    spec = GridSpec(
        rows=model.config.grid[0], cols=model.config.grid[1], bounds=tuple(meta["bounds"])
    )
    sample_set = assemble_samples(
        records, spec, model.profile_model, model.config.input_days, meta.get("horizon", 1)
    )
    _, test = split_by_day(sample_set.samples, meta.get("test_days", 14))
    if not test:
        raise DataError("no test samples in the final window")
    metrics = evaluate_model(model, test)
    _write_csv(
        args.report,
        ["r2", "spearman", "sem_r2", "sem_spearman", "n_pixels"],
        [[metrics.r2, metrics.spearman, metrics.sem_r2, metrics.sem_spearman, metrics.n_pixels]],
    )
    _write_manifest(args.report, None, {"checkpoint": args.checkpoint, "test_samples": len(test)})
    print(f"test R2 {metrics.r2:+.4f}  spearman {metrics.spearman:+.4f}  ({metrics.n_pixels} px)")
    return EXIT_OK


def _checkpoint_meta(path):
    from .net.checkpoint import load_tensors

    return load_tensors(path)


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    records = _load_records(args.data)
    spec = GridSpec(rows=cfg.grid_rows, cols=cfg.grid_cols, bounds=cfg.bounds)
    base = cfg.model_config(input_channels=16 * cfg.gmm_k)
    rows = ablation_run(
        records,
        spec,
        base,
        gmm_k=cfg.gmm_k,
        folds=cfg.folds,
        seeds=(cfg.seed,),
        test_day_count=cfg.test_days,
        horizon=cfg.horizon,
    )
    _write_csv(
        args.report,
        ["model", "r2", "sem_r2", "spearman", "sem_spearman", "folds"],
        [[r.variant, r.r2, r.sem_r2, r.spearman, r.sem_spearman, r.folds] for r in rows],
    )
    _write_manifest(args.report, cfg, {"records": len(records)})
    for r in rows:
        print(f"{r.variant:14s} R2 {r.r2:+.4f} ({r.sem_r2:.4f})  SC {r.spearman:+.4f} ({r.sem_spearman:.4f})")
    return EXIT_OK


def _parse_resolutions(text: str):
    out = []
    for part in text.split(","):
        h, _, w = part.strip().partition("x")
        try:
            out.append((int(h), int(w)))
        except ValueError:
            raise ConfigError(f"bad resolution {part!r}; expected HxW") from None
    return out


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    records = _load_records(args.data)
    resolutions = _parse_resolutions(args.resolutions)
    base = cfg.model_config(input_channels=16 * cfg.gmm_k)
    points = resolution_sweep(
        records,
        resolutions,
        cfg.bounds,
        base,
        gmm_k=cfg.gmm_k,
        folds=cfg.folds,
        test_day_count=cfg.test_days,
        n=cfg.input_days,
        k=cfg.horizon,
    )
    _write_csv(
        args.report,
        ["rows", "cols", "bins", "r2", "sem_r2", "folds"],
        [[p.rows, p.cols, p.bins, p.r2, p.sem_r2, p.folds] for p in points],
    )
    _write_manifest(args.report, cfg, {"resolutions": args.resolutions})
    for p in points:
        print(f"{p.rows:3d}x{p.cols:<3d} bins {p.bins:5d}  R2 {p.r2:+.4f} ({p.sem_r2:.4f})")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    records = _load_records(args.data)
    _, meta = _checkpoint_meta(args.checkpoint)
    spec = GridSpec(
        rows=model.config.grid[0], cols=model.config.grid[1], bounds=tuple(meta["bounds"])
    )
    sample_set = assemble_samples(
        records, spec, model.profile_model, model.config.input_days, meta.get("horizon", 1)
    )
    wanted = [s for s in sample_set.samples if s.target_date == args.date]
    if not wanted:
        raise DataError(f"no window with target date {args.date}")
    grid = model.predict(wanted[0])
    write_grid(args.out, np.stack([grid.mu, grid.sigma]))  # C=2, T=1
    print(f"wrote (mu, sigma) grids for day {args.date} to {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    grid = read_grid(args.grid)  # (C, T, H, W)
    pgm, vmin, vmax = grid_to_pgm(grid[0, 0])
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(pgm)
    print(f"min={vmin!r} max={vmax!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symptomcast",
        description="Forecast next-day region-level symptom severity from survey streams.",
    )
    parser.add_argument("--version", action="version", version=f"symptomcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic survey CSV + intensity grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit-profiles", help="fit and save a responder profile model")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_profiles)

    p = sub.add_parser("train", help="train a forecaster; writes checkpoint + loss history")
    p.add_argument("--data", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="test-window metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare model variants on identical splits")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="R2 as a function of grid resolution")
    p.add_argument("--data", required=True)
    p.add_argument("--resolutions", required=True, help="comma list of HxW, e.g. 1x1,8x8,20x20")
    p.add_argument("--config", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict", help="write (mu, sigma) grids for a target day")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--date", type=int, required=True, help="target day index")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("render", help="render a grid file as an ASCII PGM heatmap")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def _limit_threads():
    raw = os.environ.get("SYMPTOMCAST_THREADS", "1")
    try:
        n = max(1, int(raw))
    except ValueError:
        n = 1
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except Exception:  # pragma: no cover - thread capping is best effort
        pass


def main(argv=None) -> int:
    _limit_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (DataError, SurveyDataError, GridDataError, FileNotFoundError) as exc:
        return _fail(EXIT_DATA, str(exc))
    except (NumericError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except ValueError as exc:
        return _fail(EXIT_DATA, str(exc))


if __name__ == "__main__":
    sys.exit(main())
