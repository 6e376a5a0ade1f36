"""Responder profiles: diagonal Gaussian mixture fitted by EM, plus per-cell
aggregation of questionnaires into concatenated per-profile feature vectors.

The mixture lives on the canonical 15-dim record encoding.  Aggregation maps
the records of one (cell, day) to a ``K x 16`` vector: for each cluster the
mean encoding of its members plus the member-count fraction.  Clusters with
no local members are backfilled with the model's cluster mean (fraction 0)
so "no such responders here" is distinct from "responders report nothing".
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from .survey import ENCODED_DIM, encode_records

__all__ = [
    "VARIANCE_FLOOR",
    "ProfileModel",
    "ProfileFeatures",
    "fit_gmm",
    "e_step",
    "m_step",
    "assign_profile",
    "aggregate_features",
    "save_profile_model",
    "load_profile_model",
    "feature_dim",
]

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
_DEGENERATE_WEIGHT = 1e-8

# per-cluster feature block: 15 mean-encoding values + 1 count fraction
CLUSTER_BLOCK = ENCODED_DIM + 1


@dataclass(frozen=True)
class ProfileModel:
    """Fitted diagonal-covariance Gaussian mixture over encoded records."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, 15)
    variances: np.ndarray  # (K, 15)

    @property
    def k(self) -> int:
        return len(self.weights)

    def validate(self):
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, expected 1")
        if np.any(self.variances < VARIANCE_FLOOR - 1e-18):
            raise ValueError("variance below floor")
        if self.means.shape != (self.k, ENCODED_DIM) or self.variances.shape != self.means.shape:
            raise ValueError("inconsistent mixture shapes")

    def hash(self) -> str:
        """Content hash used to tie checkpoints to the profile model."""
        h = hashlib.sha256()
        for a in (self.weights, self.means, self.variances):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class ProfileFeatures:
    """Aggregated features of one cell/day: flat K*16 vector plus empty flag."""

    vector: np.ndarray
    empty: bool


def feature_dim(k: int) -> int:
    """Channel count of the aggregated representation for a K-profile model."""
    return k * CLUSTER_BLOCK


def _log_gauss(model: ProfileModel, x: np.ndarray) -> np.ndarray:
    """Per-cluster diagonal-Gaussian log densities, (N, K)."""
    diff = x[:, None, :] - model.means[None, :, :]
    quad = np.sum(diff * diff / model.variances[None, :, :], axis=2)
    logdet = np.sum(np.log(model.variances), axis=1)
    return -0.5 * (quad + logdet + ENCODED_DIM * np.log(2.0 * np.pi))


def _log_joint(model: ProfileModel, x: np.ndarray) -> np.ndarray:
    return np.log(model.weights)[None, :] + _log_gauss(model, x)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


def e_step(model: ProfileModel, vectors: np.ndarray):
    """Posterior responsibilities, log-sum-exp stabilized.

    Returns ``(resp, mean_loglik)`` where ``resp`` is (N, K) with rows on
    the simplex and ``mean_loglik`` is the average per-record log-likelihood.
    """
    x = np.asarray(vectors, dtype=np.float64)
    lj = _log_joint(model, x)
    lse = _logsumexp(lj, axis=1)
    resp = np.exp(lj - lse[:, None])
    resp /= resp.sum(axis=1, keepdims=True)
    return resp, float(lse.mean())


def m_step(vectors: np.ndarray, resp: np.ndarray) -> ProfileModel:
    """Weighted-mean / weighted-variance update with the variance floor."""
    x = np.asarray(vectors, dtype=np.float64)
    nk = resp.sum(axis=0)
    nk_safe = np.maximum(nk, 1e-300)
    means = (resp.T @ x) / nk_safe[:, None]
    k = resp.shape[1]
    variances = np.empty_like(means)
    for j in range(k):
        d = x - means[j]
        variances[j] = (resp[:, j] @ (d * d)) / nk_safe[j]
    variances = np.maximum(variances, VARIANCE_FLOOR)
    weights = nk / len(x)
    return ProfileModel(weights=weights, means=means, variances=variances)


def _init_model(x: np.ndarray, k: int) -> ProfileModel:
    """Deterministic k-means++-style seeding: farthest-point picks refined by
    Lloyd iterations, with global variances and uniform weights.

    The first seed is the point nearest the data mean; each next seed
    maximizes squared distance to the chosen set.  A short Lloyd refinement
    keeps EM out of the spiky floored-variance optima that raw corner seeds
    fall into on near-binary data.  Everything depends only on the
    empirical distribution, so duplicated inputs yield the same model.
    """
    order = np.lexsort(x.T[::-1])  # lexicographic by coordinates
    xs = x[order]
    mean = xs.mean(axis=0)
    d0 = np.sum((xs - mean) ** 2, axis=1)
    centers = [xs[np.argmin(d0)]]
    min_d = np.sum((xs - centers[0]) ** 2, axis=1)
    while len(centers) < k:
        nxt = xs[np.argmax(min_d)]
        centers.append(nxt)
        min_d = np.minimum(min_d, np.sum((xs - nxt) ** 2, axis=1))
    means = np.stack(centers)
    for _ in range(20):
        d2 = np.sum((xs[:, None, :] - means[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)  # ties pick the lowest cluster index
        new_means = means.copy()  # empty clusters keep their center
        for j in range(k):
            sel = labels == j
            if sel.any():
                new_means[j] = xs[sel].mean(axis=0)
        if np.array_equal(new_means, means):
            break
        means = new_means
    gvar = np.maximum(xs.var(axis=0), VARIANCE_FLOOR)
    return ProfileModel(
        weights=np.full(k, 1.0 / k),
        means=means,
        variances=np.tile(gvar, (k, 1)),
    )


def fit_gmm(
    vectors,
    k: int,
    max_iters: int = 100,
    tol: float = 1e-7,
    seed: int = 0,
) -> ProfileModel:
    """Fit a K-component diagonal GMM by EM.

    Stops when the mean per-record log-likelihood improves by less than
    ``tol`` or after ``max_iters``.  The likelihood is non-decreasing per
    iteration.  A cluster whose weight collapses below 1e-8 is re-seeded
    from the lowest-likelihood point (logged, not fatal).  ``seed`` is kept
    for interface stability; the seeding itself is deterministic.
    """
    del seed
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("vectors must be a non-empty (N, D) array")
    if k < 1:
        raise ValueError("k must be >= 1")
    n_distinct = len(np.unique(x, axis=0))
    if k > n_distinct:
        raise ValueError(f"k={k} exceeds the {n_distinct} distinct input vectors")

    model = _init_model(x, k)
    prev_ll = -np.inf
    for _ in range(max_iters):
        resp, ll = e_step(model, x)
        model = m_step(x, resp)
        bad = np.flatnonzero(model.weights < _DEGENERATE_WEIGHT)
        if bad.size:
            lj = _log_joint(model, x)
            worst = x[np.argmin(_logsumexp(lj, axis=1))]
            means = model.means.copy()
            weights = model.weights.copy()
            for b in bad:
                log.warning("re-seeding degenerate cluster %d", b)
                means[b] = worst
                weights[b] = 1e-3  # fixed restart mass, independent of N
            weights /= weights.sum()
            model = ProfileModel(weights=weights, means=means, variances=model.variances)
            prev_ll = -np.inf  # restart the monotonic baseline after a re-seed
            continue
        if ll - prev_ll < tol:
            break
        prev_ll = ll
    return model


def assign_profile(model: ProfileModel, vector: np.ndarray) -> int:
    """Cluster with maximum posterior responsibility; ties pick the lowest index."""
    lj = _log_joint(model, np.asarray(vector, dtype=np.float64)[None, :])
    return int(np.argmax(lj[0]))


def assign_profiles(model: ProfileModel, vectors: np.ndarray) -> np.ndarray:
    lj = _log_joint(model, np.asarray(vectors, dtype=np.float64))
    return np.argmax(lj, axis=1)


def aggregate_features(records, model: ProfileModel) -> ProfileFeatures:
    """Aggregate one cell/day's records into the K*16 profile feature vector.

    Per cluster: mean encoding of assigned members plus the member-count
    fraction.  Memberless clusters get the model cluster mean with fraction
    0.  An empty record list yields an all-zero vector flagged empty.
    """
    k = model.k
    vec = np.zeros(feature_dim(k))
    if not records:
        return ProfileFeatures(vector=vec, empty=True)
    enc = encode_records(records)
    labels = assign_profiles(model, enc)
    for j in range(k):
        block = slice(j * CLUSTER_BLOCK, j * CLUSTER_BLOCK + ENCODED_DIM)
        members = enc[labels == j]
        if len(members):
            vec[block] = members.mean(axis=0)
            vec[j * CLUSTER_BLOCK + ENCODED_DIM] = len(members) / len(records)
        else:
            vec[block] = model.means[j]
    return ProfileFeatures(vector=vec, empty=False)


# ---------------------------------------------------------------------------
# plain-text serialization (reusable across CLI invocations)


def save_profile_model(model: ProfileModel, path):
    """Write the mixture as a plain-text key-value file, full decimal precision."""
    lines = [f"K {model.k}"]
    for j in range(model.k):
        lines.append(f"weight {j} {float(model.weights[j])!r}")
        lines.append(f"mean {j} " + " ".join(repr(float(v)) for v in model.means[j]))
        lines.append(f"var {j} " + " ".join(repr(float(v)) for v in model.variances[j]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_profile_model(path) -> ProfileModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("K "):
        raise ValueError(f"{path}: not a profile model file")
    k = int(lines[0].split()[1])
    weights = np.zeros(k)
    means = np.zeros((k, ENCODED_DIM))
    variances = np.zeros((k, ENCODED_DIM))
    for ln in lines[1:]:
        parts = ln.split()
        kind, j, vals = parts[0], int(parts[1]), [float(v) for v in parts[2:]]
        if kind == "weight":
            weights[j] = vals[0]
        elif kind == "mean":
            means[j] = vals
        elif kind == "var":
            variances[j] = vals
        else:
            raise ValueError(f"{path}: unknown line {ln!r}")
    model = ProfileModel(weights=weights, means=means, variances=variances)
    model.validate()
    return model
