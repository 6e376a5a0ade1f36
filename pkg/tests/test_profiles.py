import numpy as np
import pytest

from symptomcast.profiles import (
    ProfileModel,
    VARIANCE_FLOOR,
    aggregate_features,
    assign_profile,
    e_step,
    fit_gmm,
    load_profile_model,
    m_step,
    save_profile_model,
)
from symptomcast.survey import SyntheticConfig, encode_records, generate_synthetic


def two_cluster_model(d=15, sep=5.0):
    means = np.zeros((2, d))
    means[1, 0] = sep
    return ProfileModel(
        weights=np.array([0.5, 0.5]),
        means=means,
        variances=np.full((2, d), 0.01),
    )


class TestFit:
    def test_k1_closed_form(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(50, 15))
        model = fit_gmm(x, 1)
        assert model.weights == pytest.approx([1.0])
        assert np.allclose(model.means[0], x.mean(axis=0), atol=1e-12)
        assert np.allclose(model.variances[0], np.maximum(x.var(axis=0), VARIANCE_FLOOR), atol=1e-12)

    def test_planted_two_clusters_recovered(self):
        # planted-model oracle: Bernoulli draws around two propensity vectors
        # separated by 0.9 in infinity norm
        rng = np.random.default_rng(1234)
        p1 = np.full(15, 0.05)
        p2 = np.full(15, 0.05)
        p2[:5] = 0.95
        assert np.max(np.abs(p1 - p2)) >= 0.8
        x = np.vstack([
            (rng.uniform(size=(200, 15)) < p1).astype(float),
            (rng.uniform(size=(200, 15)) < p2).astype(float),
        ])
        model = fit_gmm(x, 2, max_iters=200)
        d_direct = max(np.max(np.abs(model.means[0] - p1)), np.max(np.abs(model.means[1] - p2)))
        d_swapped = max(np.max(np.abs(model.means[0] - p2)), np.max(np.abs(model.means[1] - p1)))
        assert min(d_direct, d_swapped) < 0.1

    def test_duplication_invariance(self):
        # the fit depends only on the empirical distribution; duplicated
        # inputs differ from the original only by float reassociation
        rng = np.random.default_rng(7)
        x = (rng.uniform(size=(80, 15)) < 0.3).astype(float)
        a = fit_gmm(x, 3)
        b = fit_gmm(np.vstack([x, x]), 3)
        assert np.allclose(a.weights, b.weights, rtol=0, atol=1e-12)
        assert np.allclose(a.means, b.means, rtol=0, atol=1e-12)
        assert np.allclose(a.variances, b.variances, rtol=0, atol=1e-12)

    def test_k_exceeding_distinct_vectors_fatal(self):
        x = np.zeros((10, 15))
        x[5:, 0] = 1.0  # two distinct rows
        with pytest.raises(ValueError, match="distinct"):
            fit_gmm(x, 3)

    def test_monotone_loglik(self):
        rng = np.random.default_rng(3)
        for k in (1, 2, 4):
            x = rng.normal(size=(120, 15)) * 0.3 + (rng.integers(0, 2, size=(120, 1)))
            model = fit_gmm(x, k, max_iters=0)  # initialization only
            prev = -np.inf
            for _ in range(60):
                resp, ll = e_step(model, x)
                assert ll >= prev - 1e-9
                prev = ll
                model = m_step(x, resp)


class TestESteps:
    def test_k1_all_ones(self):
        model = ProfileModel(
            weights=np.array([1.0]),
            means=np.zeros((1, 15)),
            variances=np.full((1, 15), 0.5),
        )
        resp, _ = e_step(model, np.random.default_rng(0).normal(size=(20, 15)))
        assert np.array_equal(resp, np.ones((20, 1)))

    def test_point_at_cluster_mean(self):
        model = two_cluster_model()
        resp, _ = e_step(model, model.means[0][None])
        # density-ratio oracle: the other cluster sits 5 sigma-units away per dim
        assert resp[0, 0] > 0.99

    def test_identical_clusters_split_evenly(self):
        model = ProfileModel(
            weights=np.array([0.5, 0.5]),
            means=np.zeros((2, 15)),
            variances=np.full((2, 15), 0.3),
        )
        resp, _ = e_step(model, np.random.default_rng(1).normal(size=(10, 15)))
        assert np.allclose(resp, 0.5, atol=1e-15)

    def test_rows_sum_to_one_extreme_inputs(self):
        rng = np.random.default_rng(2)
        model = ProfileModel(
            weights=np.array([0.25, 0.25, 0.5]),
            means=rng.uniform(size=(3, 15)),
            variances=np.full((3, 15), VARIANCE_FLOOR),  # sharpest allowed clusters
        )
        x = np.ones((40, 15))  # max-norm corner of the encoded cube
        resp, _ = e_step(model, x)
        assert np.all(np.abs(resp.sum(axis=1) - 1.0) <= 1e-12)

    def test_m_step_one_hot(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(size=(30, 15))
        labels = rng.integers(0, 2, size=30)
        resp = np.eye(2)[labels]
        model = m_step(x, resp)
        for j in (0, 1):
            sel = x[labels == j]
            assert np.allclose(model.means[j], sel.mean(axis=0))
            assert np.allclose(model.variances[j], np.maximum(sel.var(axis=0), VARIANCE_FLOOR))
            assert model.weights[j] == pytest.approx(np.mean(labels == j))

    def test_m_step_uniform_resp(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(size=(25, 15))
        model = m_step(x, np.full((25, 3), 1 / 3))
        for j in range(3):
            assert np.allclose(model.means[j], x.mean(axis=0))

    def test_m_step_constant_data_floored(self):
        x = np.full((10, 15), 0.25)
        model = m_step(x, np.ones((10, 1)))
        assert np.all(model.variances == VARIANCE_FLOOR)
        assert np.all(np.isfinite(model.means))


class TestAssign:
    def test_at_cluster0_mean(self):
        model = two_cluster_model()
        assert assign_profile(model, model.means[0]) == 0
        assert assign_profile(model, model.means[1]) == 1

    def test_k1_always_zero(self):
        model = ProfileModel(
            weights=np.array([1.0]), means=np.zeros((1, 15)), variances=np.ones((1, 15))
        )
        assert assign_profile(model, np.full(15, 3.3)) == 0

    def test_exact_tie_lower_index(self):
        model = two_cluster_model(sep=2.0)
        midpoint = model.means.mean(axis=0)  # equidistant by symmetric construction
        assert assign_profile(model, midpoint) == 0

    def test_weight_rescaling_invariance(self):
        rng = np.random.default_rng(8)
        model = ProfileModel(
            weights=np.array([0.2, 0.3, 0.5]),
            means=rng.uniform(size=(3, 15)),
            variances=rng.uniform(0.01, 0.4, size=(3, 15)),
        )
        scaled = ProfileModel(
            weights=model.weights * 7.5, means=model.means, variances=model.variances
        )
        for _ in range(50):
            v = rng.uniform(size=15)
            assert assign_profile(model, v) == assign_profile(scaled, v)


class TestAggregate:
    def setup_method(self):
        records, _ = generate_synthetic(SyntheticConfig(days=2, responses_per_day=60, seed=11))
        self.records = records
        self.enc = encode_records(records)

    def test_all_assigned_to_one_cluster(self):
        model = two_cluster_model()
        # records encode into [0,1]^15, so they all sit near cluster 0 at origin
        feats = aggregate_features(self.records[:8], model)
        assert not feats.empty
        enc = encode_records(self.records[:8])
        assert np.allclose(feats.vector[:15], enc.mean(axis=0))
        assert feats.vector[15] == 1.0
        assert np.allclose(feats.vector[16:31], model.means[1])  # backfilled with model mean
        assert feats.vector[31] == 0.0

    def test_empty_cell(self):
        model = two_cluster_model()
        feats = aggregate_features([], model)
        assert feats.empty
        assert np.array_equal(feats.vector, np.zeros(32))

    def test_k1_equals_raw_averaging(self):
        model = fit_gmm(self.enc, 1)
        feats = aggregate_features(self.records, model)
        assert np.allclose(feats.vector[:15], self.enc.mean(axis=0))
        assert feats.vector[15] == 1.0

    def test_fractions_sum_to_one(self):
        model = fit_gmm(self.enc, 4)
        feats = aggregate_features(self.records, model)
        assert feats.vector[15::16].sum() == pytest.approx(1.0, abs=1e-12)


class TestSerialization:
    def test_roundtrip_exact(self, tmp_path):
        records, _ = generate_synthetic(SyntheticConfig(days=3, responses_per_day=80, seed=21))
        model = fit_gmm(encode_records(records), 4)
        path = tmp_path / "profiles.txt"
        save_profile_model(model, path)
        back = load_profile_model(path)
        assert np.array_equal(back.weights, model.weights)
        assert np.array_equal(back.means, model.means)
        assert np.array_equal(back.variances, model.variances)
        assert back.hash() == model.hash()

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("whatever\n")
        with pytest.raises(ValueError):
            load_profile_model(path)
