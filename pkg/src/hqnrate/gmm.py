"""Gaussian mixture fitting by expectation-maximization."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from hqnrate import kernels
from hqnrate.seeding import rng_for
from hqnrate.noise import GmmModel, as_samples

log = logging.getLogger(__name__)

EPS = np.finfo(np.float64).eps


@dataclass
class Responsibilities:
    """Posterior component probabilities ``gamma`` (N, R) plus per-sample log density."""

    gamma: np.ndarray
    log_norm: np.ndarray
    flagged: np.ndarray  # sample indices where every component had zero density

    @property
    def loglik(self) -> float:
        return float(np.sum(self.log_norm[np.isfinite(self.log_norm)]))


@dataclass
class EmTrace:
    loglik: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    reseeded: list = field(default_factory=list)  # (iteration, component) pairs


def default_floor(X) -> float:
    """1e-6 * trace(cov(X)) / D, bounded away from zero for constant data."""
    X = as_samples(X)
    if X.shape[0] < 2:
        return 1e-10
    tr = float(np.trace(np.atleast_2d(np.cov(X, rowvar=False, bias=True))))
    return max(1e-6 * tr / X.shape[1], 1e-10)


def apply_floor(cov, floor) -> np.ndarray:
    """Symmetrize and clamp eigenvalues of ``cov`` at ``floor``; untouched when already above it."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    out = (vecs * np.maximum(vals, floor)) @ vecs.T
    return 0.5 * (out + out.T)


def log_pdf(model: GmmModel, X) -> np.ndarray:
    """Per-sample log density under the renormalized mixture."""
    return model.log_pdf(X, normalize=True)


def e_step(model: GmmModel, X) -> Responsibilities:
    X = as_samples(X, model.dim)
    if X.shape[0] < 1:
        raise ValueError("e_step needs at least one sample")
    lp = model.component_log_prob(X, normalize=True)
    lse = kernels.logsumexp_rows(lp)
    flagged = np.flatnonzero(~np.isfinite(lse))
    with np.errstate(invalid="ignore"):
        gamma = np.exp(lp - lse[:, None])
    if flagged.size:
        log.warning("%d samples have zero density under every component", flagged.size)
        gamma[flagged] = 1.0 / model.n_components
    return Responsibilities(gamma, lse, flagged)


def m_step(X, resp, floor=None, seed=None, reseeded=None) -> GmmModel:
    """Closed-form mixture update from responsibilities.

    Components whose effective count falls below ``10 * eps * N`` are
    reseeded on a random data point; their indices are appended to
    ``reseeded`` when a list is given.
    """
    X = as_samples(X)
    gamma = resp.gamma if isinstance(resp, Responsibilities) else np.asarray(resp, dtype=np.float64)
    n, d = X.shape
    k = gamma.shape[1]
    if gamma.shape[0] != n:
        raise ValueError("responsibilities and data disagree on sample count")
    if floor is None:
        floor = default_floor(X)
    nk = gamma.sum(axis=0)
    dead = nk < 10 * EPS * n
    safe_nk = np.where(dead, 1.0, nk)
    means = (gamma.T @ X) / safe_nk[:, None]
    covs = np.empty((k, d, d))
    for r in range(k):
        diff = X - means[r]
        c = (gamma[:, r, None] * diff).T @ diff / safe_nk[r]
        covs[r] = apply_floor(c, floor)
    weights = nk / n
    if dead.any():
        rng = rng_for(seed)
        data_cov = apply_floor(np.atleast_2d(np.cov(X, rowvar=False, bias=True)), floor)
        for r in np.flatnonzero(dead):
            means[r] = X[rng.integers(n)]
            covs[r] = data_cov
            weights[r] = 1.0 / k
            if reseeded is not None:
                reseeded.append(int(r))
        log.info("reseeded components %s", np.flatnonzero(dead).tolist())
    return GmmModel(weights / weights.sum(), means, covs, normalized=True)


def init_gmm(X, r_count, seed, floor=None) -> GmmModel:
    """Distance-weighted greedy seeding of the means (k-means++ style);
    covariances start at the data covariance and weights are uniform."""
    X = as_samples(X)
    n, d = X.shape
    if n < r_count:
        raise ValueError(f"need at least {r_count} samples, got {n}")
    if floor is None:
        floor = default_floor(X)
    rng = rng_for(seed)
    n_distinct = np.unique(X, axis=0).shape[0]
    if n_distinct < r_count:
        idx = rng.choice(n, size=r_count, replace=False)
        scale = np.sqrt(max(floor, 1e-12))
        centers = X[idx] + scale * rng.standard_normal((r_count, d))
    else:
        centers = np.empty((r_count, d))
        centers[0] = X[rng.integers(n)]
        d2 = np.sum((X - centers[0]) ** 2, axis=1)
        for j in range(1, r_count):
            total = d2.sum()
            if total > 0:
                pick = rng.choice(n, p=d2 / total)
            else:
                pick = rng.integers(n)
            centers[j] = X[pick]
            d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))
    cov = apply_floor(np.atleast_2d(np.cov(X, rowvar=False, bias=True)), floor)
    covs = np.broadcast_to(cov, (r_count, d, d)).copy()
    return GmmModel(np.full(r_count, 1.0 / r_count), centers, covs, normalized=True)


def fit_em(X, r_count, max_iters=300, tol=1e-6, seed=0, floor=None, init=None):
    """Fit an ``r_count``-component mixture by EM.

    Stops when the change in mean per-sample log-likelihood drops below
    ``tol`` or after ``max_iters`` M-steps. The trace records the total
    log-likelihood of every model visited; the returned model is the one
    with the highest recorded value.
    """
    X = as_samples(X)
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot fit a mixture to empty data")
    if n <= r_count:
        raise ValueError(f"need more samples ({n}) than components ({r_count})")
    if floor is None:
        floor = default_floor(X)
    model = init if init is not None else init_gmm(X, r_count, seed, floor)
    trace = EmTrace()
    best, best_ll = model, -np.inf
    prev = None
    for it in range(max_iters + 1):
        resp = e_step(model, X)
        ll = resp.loglik
        trace.loglik.append(ll)
        if ll > best_ll:
            best, best_ll = model, ll
        if prev is not None and abs(ll - prev) / n < tol:
            trace.converged = True
            break
        if it == max_iters:
            break
        prev = ll
        dead = []
        model = m_step(X, resp, floor, seed=[seed, it], reseeded=dead)
        trace.reseeded.extend((it, r) for r in dead)
        trace.n_iter = it + 1
    return best, trace


def model_to_dict(model: GmmModel, floor=None, trace: EmTrace | None = None) -> dict:
    doc = {
        "dim": model.dim,
        "normalized": model.normalized,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "covariances": model.covariances.tolist(),
        "floor": floor,
    }
    if trace is not None:
        doc["trace"] = {
            "loglik": list(trace.loglik),
            "n_iter": trace.n_iter,
            "converged": trace.converged,
            "reseeded": [list(p) for p in trace.reseeded],
        }
    return doc


def model_from_dict(doc: dict) -> GmmModel:
    model = GmmModel(
        np.array(doc["weights"], dtype=np.float64),
        np.array(doc["means"], dtype=np.float64).reshape(len(doc["weights"]), doc["dim"]),
        np.array(doc["covariances"], dtype=np.float64),
        normalized=doc.get("normalized", True),
    )
    if model.dim != doc["dim"]:
        raise ValueError("dim field disagrees with means")
    return model


def save_model(path, model: GmmModel, floor=None, trace=None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, floor, trace), fh, indent=1)
        fh.write("\n")


def load_model(path) -> GmmModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
