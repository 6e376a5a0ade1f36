"""Acceptance suite: every criterion runs at its stated tolerance and prints
one PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see
them).  The synthetic-experiment criteria share one fixed-seed scenario."""

import time

import numpy as np
import pytest

from symptomcast.evaluation import (
    ablation_run,
    cross_validate,
    make_split,
    r2_score,
    resolution_sweep,
    shuffle_labels_in_time,
    spearman_corr,
)
from symptomcast.gridding import (
    GridSpec,
    WindowSample,
    bin_records,
    build_day_tensors,
    build_label_grids,
    build_windows,
    interpolate_empty_cells,
)
from symptomcast.models import ModelConfig, build_network
from symptomcast.net import Conv3d, Deconv2d, Deconv3d, Dense, ReLU, Softplus, grad_check
from symptomcast.net.truncgauss import gauss_nll, trunc_gauss_logpdf, trunc_gauss_nll
from symptomcast.pipeline import (
    SampleSet,
    assemble_samples,
    fit_profiles,
    split_by_day,
    train_model,
)
from symptomcast.profiles import e_step, fit_gmm, m_step
from symptomcast.survey import SyntheticConfig, encode_records, generate_synthetic

from test_metrics import brute_r2, brute_spearman

# fixed-seed synthetic scenario shared by criteria 6 and 7
SCENARIO = dict(days=50, responses_per_day=300, n_hotspots=2, seed=42)
GRID = (20, 20)
ABLATION_FOLDS = 3
ABLATION_SEEDS = (0, 1)
ABLATION_EPOCHS = 50
SWEEP_RESOLUTIONS = [(1, 1), (4, 4), (8, 8), (14, 14), (20, 20), (40, 40)]
SWEEP_FOLDS = 2
SWEEP_EPOCHS = 40


def report(n, ok, detail):
    print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def scenario_records():
    records, field = generate_synthetic(SyntheticConfig(**SCENARIO))
    return records, field


# ---------------------------------------------------------------------------
# 1. gradient correctness


def _layer_fd(layer, x, seed):
    rng = np.random.default_rng(seed)
    target = rng.normal(size=layer.forward(x, remember=False).shape)

    def loss_fn():
        return float(0.5 * np.sum((layer.forward(x, remember=False) - target) ** 2))

    def grad_fn():
        for p in layer.params().values():
            p.grad[...] = 0.0
        out = layer.forward(x)
        dx = layer.backward(out - target)
        return [p.grad.copy() for p in layer.params().values()] + [dx]

    arrays = [p.value for p in layer.params().values()] + [x]
    return grad_check(loss_fn, grad_fn, arrays, max_coords=50, seed=seed)


def test_criterion_1_gradient_correctness():
    t0 = time.time()
    n_seeds = 20
    worst = {"conv3d": 0.0, "deconv3d": 0.0, "deconv2d": 0.0, "dense": 0.0,
             "relu": 0.0, "softplus": 0.0, "nll": 0.0, "network": 0.0}
    for seed in range(n_seeds):
        rng = np.random.default_rng(seed)

        conv = Conv3d(2, 3, kernel=(2, 3, 3), stride=(1, 2, 2), padding=(1, 1, 1), rng=rng)
        worst["conv3d"] = max(worst["conv3d"], _layer_fd(conv, rng.normal(size=(2, 2, 3, 5, 5)), seed))

        dec = Deconv3d(2, 3, kernel=(3, 3, 3), stride=(2, 2, 2), padding=(1, 1, 1),
                       output_padding=(1, 0, 1), rng=rng)
        worst["deconv3d"] = max(worst["deconv3d"], _layer_fd(dec, rng.normal(size=(1, 2, 2, 3, 3)), seed))

        dec2 = Deconv2d(3, 2, kernel=(3, 3), stride=(2, 2), padding=(1, 1),
                        output_padding=(1, 1), rng=rng)
        worst["deconv2d"] = max(worst["deconv2d"], _layer_fd(dec2, rng.normal(size=(2, 3, 4, 4)), seed))

        dense = Dense(7, 5, rng=rng)
        worst["dense"] = max(worst["dense"], _layer_fd(dense, rng.normal(size=(3, 7)), seed))

        worst["relu"] = max(worst["relu"], _layer_fd(ReLU(), rng.normal(size=(2, 11)), seed))
        worst["softplus"] = max(worst["softplus"], _layer_fd(Softplus(), rng.normal(size=(2, 11)), seed))

        mu = rng.uniform(-0.5, 1.5, size=(4, 4))
        sigma = rng.uniform(0.05, 1.5, size=(4, 4))
        x = rng.uniform(size=(4, 4))
        mask = rng.uniform(size=(4, 4)) < 0.7
        mask[0, 0] = True
        worst["nll"] = max(
            worst["nll"],
            grad_check(
                lambda: trunc_gauss_nll(mu, sigma, x, mask)[0],
                lambda: list(trunc_gauss_nll(mu, sigma, x, mask)[1:]),
                [mu, sigma],
                seed=seed,
            ),
        )

        cfg = ModelConfig(mode="full", input_channels=4, input_days=3, grid=(6, 6), seed=100 + seed)
        net = build_network(cfg)
        for name, p in net.param_set.params.items():
            if name.endswith("bias"):  # generic point: off the ReLU kinks
                p.value[...] = rng.normal(0.0, 0.1, size=p.value.shape)
        inputs = rng.normal(size=(1, 4, 3, 6, 6))
        labels = rng.uniform(size=(1, 6, 6))
        masks = rng.uniform(size=(1, 6, 6)) < 0.7
        masks[0, 0, 0] = True

        def loss_fn():
            m, s = net.forward_batch(inputs, remember=False)
            return trunc_gauss_nll(m, s, labels, masks)[0]

        def grad_fn():
            net.param_set.zero_grads()
            m, s = net.forward_batch(inputs)
            _, dm, ds = trunc_gauss_nll(m, s, labels, masks)
            net.backward_batch(dm, ds)
            return [p.grad.copy() for p in net.param_set.params.values()]

        worst["network"] = max(
            worst["network"],
            grad_check(loss_fn, grad_fn, [p.value for p in net.param_set.params.values()],
                       max_coords=20, seed=seed),
        )
    wall = time.time() - t0
    ok = (
        worst["dense"] < 1e-6
        and all(worst[k] < 1e-5 for k in ("conv3d", "deconv3d", "deconv2d", "relu", "softplus", "nll"))
        and worst["network"] < 1e-4
        and wall < 120.0
    )
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f", wall {wall:.0f}s (< 120s)"
    report(1, ok, detail)


# ---------------------------------------------------------------------------
# 2. EM correctness


def test_criterion_2_em_correctness():
    t0 = time.time()
    monotone = True
    for ds in range(20):
        rng = np.random.default_rng(1000 + ds)
        k = int(rng.integers(1, 5))
        shift = rng.uniform(0, 1, size=(1, 15)) * rng.integers(0, 2, size=(120, 1))
        x = rng.normal(size=(120, 15)) * 0.3 + shift
        model = fit_gmm(x, k, max_iters=0)  # seeding only; iterate manually
        prev = -np.inf
        for _ in range(100):
            resp, ll = e_step(model, x)
            monotone &= ll >= prev - 1e-9
            prev = ll
            model = m_step(x, resp)

    rng = np.random.default_rng(1234)
    p1 = np.full(15, 0.05)
    p2 = np.full(15, 0.05)
    p2[:5] = 0.95
    x = np.vstack([
        (rng.uniform(size=(200, 15)) < p1).astype(float),
        (rng.uniform(size=(200, 15)) < p2).astype(float),
    ])
    model = fit_gmm(x, 2, max_iters=200)
    d_direct = max(np.max(np.abs(model.means[0] - p1)), np.max(np.abs(model.means[1] - p2)))
    d_swapped = max(np.max(np.abs(model.means[0] - p2)), np.max(np.abs(model.means[1] - p1)))
    recovery = min(d_direct, d_swapped)
    wall = time.time() - t0
    ok = monotone and recovery < 0.1 and wall < 60.0
    report(2, ok, f"monotone {monotone}, planted-mean error {recovery:.3f} (< 0.1), wall {wall:.1f}s (< 60s)")


# ---------------------------------------------------------------------------
# 3. truncated-Gaussian head


def _simpson(f, a, b, n):
    xs = np.linspace(a, b, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(np.sum(w * f(xs)) * (b - a) / (3 * n))


def test_criterion_3_truncated_gaussian_head():
    rng = np.random.default_rng(77)
    worst_norm = 0.0
    worst_nll = 0.0
    for _ in range(50):
        mu = rng.uniform(-1.0, 2.0)
        sigma = rng.uniform(0.05, 2.0)
        integral = _simpson(lambda x: np.exp(trunc_gauss_logpdf(x, mu, sigma)), 0.0, 1.0, 10_000)
        worst_norm = max(worst_norm, abs(integral - 1.0))

        x = rng.uniform(0.0, 1.0)
        mass = _simpson(
            lambda t: np.exp(-0.5 * ((t - mu) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi)),
            0.0, 1.0, 400_000,
        )
        quad_nll = -(np.log(np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi)))
                     - np.log(mass))
        loss, _, _ = trunc_gauss_nll(np.array([[mu]]), np.array([[sigma]]),
                                     np.array([[x]]), np.array([[True]]))
        worst_nll = max(worst_nll, abs(loss - quad_nll))

    mu = rng.uniform(-0.5, 1.5, size=(8, 8))
    sigma = rng.uniform(0.05, 2.0, size=(8, 8))
    x = rng.uniform(size=(8, 8))
    mask = rng.uniform(size=(8, 8)) < 0.8
    mask[0, 0] = True
    wide, _, _ = trunc_gauss_nll(mu, sigma, x, mask, bounds=(-1e9, 1e9))
    gap = abs(wide - gauss_nll(mu, sigma, x, mask))

    ok = worst_norm < 1e-6 and worst_nll < 1e-9 and gap < 1e-9
    report(3, ok, f"normalization {worst_norm:.2e} (< 1e-6), NLL-vs-quadrature {worst_nll:.2e} (< 1e-9), "
                  f"unbounded-limit {gap:.2e} (< 1e-9)")


# ---------------------------------------------------------------------------
# 4. pipeline invariants


def test_criterion_4_pipeline_invariants():
    rng = np.random.default_rng(4242)

    conserved = True
    for _ in range(1000):
        rows, cols = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        spec = GridSpec(rows=rows, cols=cols, bounds=(0.0, 1.0, 0.0, 1.0))
        pts = rng.uniform(size=(int(rng.integers(1, 60)), 2))
        counts = np.zeros((rows, cols), dtype=int)
        for x, y in pts:
            r, c = spec.cell_of(x, y)
            counts[r, c] += 1
        conserved &= counts.sum() == len(pts)

    idempotent = True
    for _ in range(1000):
        rows, cols = int(rng.integers(2, 8)), int(rng.integers(2, 8))
        spec = GridSpec(rows=rows, cols=cols, bounds=(0.0, 1.0, 0.0, 1.0))
        values = rng.normal(size=(2, rows, cols))
        observed = rng.uniform(size=(rows, cols)) < rng.uniform(0.15, 0.9)
        observed[int(rng.integers(rows)), int(rng.integers(cols))] = True
        once = interpolate_empty_cells(values, observed, spec)
        twice = interpolate_empty_cells(once, observed, spec)
        idempotent &= np.array_equal(once, twice)

    leak_free = True
    for _ in range(1000):
        n_days = int(rng.integers(8, 40))
        n = int(rng.integers(1, 4))
        k = int(rng.integers(1, 3))
        samples = []
        for t in range(n_days - n - k + 1):
            target = t + n + k - 1
            samples.append(WindowSample(
                input=np.zeros((1, n, 2, 2)),
                label=np.zeros((2, 2)),
                label_mask=np.ones((2, 2), dtype=bool),
                target_date=target,
                input_dates=tuple(range(t, t + n)),
            ))
        leak_free &= all(max(s.input_dates) < s.target_date for s in samples)
        max_folds = max(1, min(5, len(samples) // 2))
        plan = make_split(samples, folds=int(rng.integers(1, max_folds + 1)))
        try:
            plan.check_no_leakage(samples)
        except AssertionError:
            leak_free = False

    mask_zero = True
    for _ in range(1000):
        h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        mu = rng.normal(size=(h, w))
        sigma = rng.uniform(0.05, 1.5, size=(h, w))
        x = rng.uniform(size=(h, w))
        mask = rng.uniform(size=(h, w)) < 0.6
        mask[0, 0] = True
        x2 = x.copy()
        x2[~mask] = rng.normal(size=(~mask).sum()) * 100.0
        l1, dm1, ds1 = trunc_gauss_nll(mu, sigma, x, mask)
        l2, dm2, ds2 = trunc_gauss_nll(mu, sigma, x2, mask)
        mask_zero &= (l1 == l2 and np.array_equal(dm1, dm2) and np.array_equal(ds1, ds2)
                      and np.all(dm1[~mask] == 0.0) and np.all(ds1[~mask] == 0.0))

    net_mask_zero = True
    for seed in range(20):
        srng = np.random.default_rng(seed)
        cfg = ModelConfig(mode="full", input_channels=4, grid=(5, 5), seed=seed)
        inp = srng.normal(size=(1, 4, 3, 5, 5))
        lab = srng.uniform(size=(1, 5, 5))
        msk = srng.uniform(size=(1, 5, 5)) < 0.5
        msk[0, 0, 0] = True

        def net_grads(labels):
            net = build_network(cfg)
            net.param_set.zero_grads()
            m, s = net.forward_batch(inp)
            _, dm, ds = trunc_gauss_nll(m, s, labels, msk)
            net.backward_batch(dm, ds)
            return [p.grad.copy() for p in net.param_set.params.values()]

        lab2 = lab.copy()
        lab2[~msk] += 55.0
        net_mask_zero &= all(np.array_equal(a, b) for a, b in zip(net_grads(lab), net_grads(lab2)))

    ok = conserved and idempotent and leak_free and mask_zero and net_mask_zero
    report(4, ok, f"conservation {conserved}, idempotence {idempotent}, leakage-free {leak_free}, "
                  f"mask-zero-grad {mask_zero} (loss, 1000x) / {net_mask_zero} (network, 20x)")


# ---------------------------------------------------------------------------
# 5. metric oracles


def test_criterion_5_metric_oracles():
    rng = np.random.default_rng(55)
    worst_r2 = 0.0
    worst_sc = 0.0
    for i in range(1000):
        n = int(rng.integers(2, 60))
        if i % 2 == 0:  # tie-heavy integer vectors
            t = rng.integers(0, 5, size=n).astype(float)
            p = rng.integers(0, 5, size=n).astype(float)
        else:
            t = rng.normal(size=n)
            p = rng.normal(size=n)
        if np.ptp(t) == 0:
            t[0] += 1.0
        worst_r2 = max(worst_r2, abs(r2_score(p, t) - brute_r2(p.tolist(), t.tolist())))
        if np.ptp(p) > 0 and n >= 3:
            worst_sc = max(worst_sc, abs(spearman_corr(p, t) - brute_spearman(p.tolist(), t.tolist())))
    ok = worst_r2 < 1e-9 and worst_sc < 1e-9
    report(5, ok, f"r2 vs brute force {worst_r2:.2e}, spearman vs brute force {worst_sc:.2e} (< 1e-9)")


# ---------------------------------------------------------------------------
# 6. synthetic skill ordering (model-component table analogue)


def test_criterion_6_skill_ordering(scenario_records):
    t0 = time.time()
    records, _ = scenario_records
    spec = GridSpec(rows=GRID[0], cols=GRID[1], bounds=(0.0, 1.0, 0.0, 1.0))
    base = ModelConfig(mode="full", input_channels=64, input_days=3, grid=GRID,
                       patch=(10, 10, 5), epochs=ABLATION_EPOCHS, batch_size=8, lr=1e-4, seed=0)
    rows = {r.variant: r for r in ablation_run(
        records, spec, base, gmm_k=4, folds=ABLATION_FOLDS, seeds=ABLATION_SEEDS, test_day_count=14,
    )}

    # label-time-shuffled null for the full model
    pm = fit_profiles(records, 4, seed=0, before_day=sorted({r.date for r in records})[-14])
    sample_set = assemble_samples(records, spec, pm, 3, 1)
    pool, _ = split_by_day(sample_set.samples, 14)
    null_pool = SampleSet(samples=shuffle_labels_in_time(pool, seed=9),
                          spec=spec, profile_model=pm, input_days=3, horizon=1)
    _, null_agg = cross_validate(null_pool, base, ABLATION_FOLDS)

    wall = time.time() - t0
    full = rows["full_patched"].r2
    raw = rows["raw_features"].r2
    fc = rows["baseline_fc"].r2
    ok = (full >= fc + 0.05) and (full > raw) and (null_agg.r2 <= 0.05) and wall < 1200.0
    report(6, ok, f"full {full:+.3f} vs baseline {fc:+.3f} (needs +0.05) and raw {raw:+.3f}; "
                  f"shuffled-null R2 {null_agg.r2:+.3f} (<= 0.05); wall {wall:.0f}s (< 1200s)")


# ---------------------------------------------------------------------------
# 7. resolution-sweep shape


def test_criterion_7_resolution_sweep(scenario_records):
    records, _ = scenario_records
    base = ModelConfig(mode="full", input_channels=64, input_days=3, grid=GRID,
                       epochs=SWEEP_EPOCHS, batch_size=8, lr=1e-4, seed=0)
    points = resolution_sweep(records, SWEEP_RESOLUTIONS, (0.0, 1.0, 0.0, 1.0), base,
                              gmm_k=4, folds=SWEEP_FOLDS, test_day_count=14)
    r2s = [p.r2 for p in points]
    best = int(np.nanargmax(r2s))
    ok = 0 < best < len(points) - 1
    curve = ", ".join(f"{p.bins}:{p.r2:+.3f}" for p in points)
    report(7, ok, f"max at {points[best].rows}x{points[best].cols} (interior: {ok}); curve [{curve}]")


# ---------------------------------------------------------------------------
# 8. checkpoint determinism through the CLI


def test_criterion_8_cli_determinism(tmp_path):
    from symptomcast.cli import main

    cfg_text = (
        "seed = 3\ndays = 14\nresponses_per_day = 90\nn_hotspots = 1\n"
        "grid_rows = 5\ngrid_cols = 5\ngmm_k = 2\nmode = full\n"
        "patch_rows = 0\npatch_cols = 0\nepochs = 3\nbatch_size = 4\n"
        "test_days = 4\nfolds = 2\n"
    )
    (tmp_path / "run.cfg").write_text(cfg_text)
    assert main(["generate", "--config", str(tmp_path / "run.cfg"), "--out", str(tmp_path / "d.csv")]) == 0
    assert main(["fit-profiles", "--data", str(tmp_path / "d.csv"), "--k", "2", "--seed", "0",
                 "--out", str(tmp_path / "p.txt")]) == 0
    for name in ("a.ckpt", "b.ckpt"):
        assert main(["train", "--data", str(tmp_path / "d.csv"), "--profiles", str(tmp_path / "p.txt"),
                     "--config", str(tmp_path / "run.cfg"), "--out", str(tmp_path / name)]) == 0
    identical = (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    report(8, identical, "two cmd_train runs with identical config+seed produce bitwise-identical checkpoints")


# ---------------------------------------------------------------------------
# 9. overfit sanity


def test_criterion_9_overfit_sanity(scenario_records):
    records, _ = scenario_records
    spec = GridSpec(rows=10, cols=10, bounds=(0.0, 1.0, 0.0, 1.0))
    pm = fit_profiles(records, 1, seed=0, before_day=20)
    sample_set = assemble_samples([r for r in records if r.date < 20], spec, pm, 3, 1)
    five = sample_set.samples[:5]
    cfg = ModelConfig(mode="raw_features", input_channels=16, grid=(10, 10),
                      epochs=500, batch_size=1, lr=1e-3, seed=0)
    model = train_model(five, cfg, pm)
    first, last = model.history[0], model.history[-1]
    ok = last < 0.2 * first
    report(9, ok, f"epoch-1 NLL {first:.4f} -> epoch-500 NLL {last:.4f} (needs < {0.2 * first:.4f})")
