"""Hybrid quantum noise (truncated Poisson + Gaussian) and the channel Y = TX + Z.

The noise density is a Gaussian mixture whose weights are Poisson
probabilities truncated at order ``r_max``; weights are kept unnormalized
so that the density integrates to the truncated Poisson mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hqnrate import kernels
from hqnrate.seeding import rng_for, seed_key  # noqa: F401

LOG_2PI = math.log(2.0 * math.pi)

# Fixed chunk size for seeded sampling; each chunk draws from its own
# (seed, chunk) stream so results do not depend on how chunks are scheduled.
SAMPLE_CHUNK = 1 << 16


class CovarianceError(np.linalg.LinAlgError):
    """A mixture component has a covariance that is not symmetric positive definite."""

    def __init__(self, index, reason="not positive definite"):
        super().__init__(f"component {index}: covariance {reason}")
        self.index = index


@dataclass(frozen=True)
class HqnParams:
    """Hybrid-noise parameters.

    ``lam`` is the mean photon count, ``r_max`` the Poisson truncation
    order, ``mu_cl``/``sigma_cl`` the classical Gaussian mean and std.
    """

    lam: float
    r_max: int = 6
    mu_cl: float = 0.0
    sigma_cl: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if int(self.r_max) != self.r_max or self.r_max < 0:
            raise ValueError(f"r_max must be a nonnegative integer, got {self.r_max}")
        if not self.sigma_cl > 0:
            raise ValueError(f"sigma_cl must be > 0, got {self.sigma_cl}")
        if not math.isfinite(self.mu_cl):
            raise ValueError("mu_cl must be finite")

    @property
    def weights(self) -> np.ndarray:
        return np.array([poisson_weight(self.lam, i) for i in range(self.r_max + 1)])

    @property
    def truncated_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def truncated_poisson_mean(self) -> float:
        w = self.weights
        return float(np.dot(np.arange(w.size), w) / w.sum())


@dataclass(frozen=True)
class ChannelConfig:
    """Amplitude transmission ``t_coeff`` and Gaussian modulation N(mu_x, sigma_x^2)."""

    t_coeff: float
    mu_x: float = 0.0
    sigma_x: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.t_coeff <= 1.0:
            raise ValueError(f"t_coeff must lie in [0, 1], got {self.t_coeff}")
        if not self.sigma_x > 0:
            raise ValueError(f"sigma_x must be > 0, got {self.sigma_x}")

    @property
    def transmissivity(self) -> float:
        return self.t_coeff**2


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Weighted set of multivariate Gaussian components.

    Stored as stacked arrays: ``weights`` (R,), ``means`` (R, D) and
    ``covariances`` (R, D, D). ``normalized`` records whether the weights
    were renormalized to sum to one; truncated-Poisson mixtures are not.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    normalized: bool = True
    _prec_chol: np.ndarray = field(init=False, repr=False)
    _log_det: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.asarray(self.means, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu.reshape(-1, 1)
        cov = np.asarray(self.covariances, dtype=np.float64)
        k, d = mu.shape
        if cov.ndim == 1:
            cov = cov.reshape(k, 1, 1)
        if w.size != k or cov.shape != (k, d, d):
            raise ValueError(
                f"inconsistent component shapes: weights {w.shape}, means {mu.shape}, "
                f"covariances {cov.shape}"
            )
        if k == 0:
            raise ValueError("a mixture needs at least one component")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if self.normalized and abs(total - 1.0) > 1e-12:
            raise ValueError(f"normalized weights sum to {total!r}")
        if not 0.0 < total <= 1.0 + 1e-12:
            raise ValueError(f"weight mass must lie in (0, 1], got {total!r}")
        prec = np.empty_like(cov)
        log_det = np.empty(k)
        for r in range(k):
            c = cov[r]
            scale = max(np.abs(c).max(), np.finfo(float).tiny)
            if np.abs(c - c.T).max() > 1e-12 * scale:
                raise CovarianceError(r, "not symmetric")
            try:
                chol = np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise CovarianceError(r) from None
            inv = np.linalg.inv(chol)
            prec[r] = np.tril(inv)
            log_det[r] = 2.0 * np.log(np.diag(chol)).sum()
        for name, value in (("weights", w), ("means", mu), ("covariances", cov)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "_prec_chol", prec)
        object.__setattr__(self, "_log_det", log_det)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(float(w), m, c)
            for w, m, c in zip(self.weights, self.means, self.covariances)
        ]

    def renormalized(self) -> "GmmModel":
        if self.normalized:
            return self
        return GmmModel(self.weights / self.weights.sum(), self.means, self.covariances, True)

    def component_log_prob(self, X, normalize=True) -> np.ndarray:
        """(N, R) matrix of log(weight_r) + log N(x_i; mu_r, Sigma_r)."""
        X = as_samples(X, self.dim)
        w = self.weights / self.weights.sum() if normalize else self.weights
        with np.errstate(divide="ignore"):
            log_const = np.log(w) - 0.5 * (self.dim * LOG_2PI + self._log_det)
        return kernels.component_log_prob(X, self.means, self._prec_chol, log_const)

    def log_pdf(self, X, normalize=False) -> np.ndarray:
        """Log density at each row of ``X`` using the stored (raw) weights by default."""
        return kernels.logsumexp_rows(self.component_log_prob(X, normalize=normalize))

    def pdf(self, X, normalize=False) -> np.ndarray:
        return np.exp(self.log_pdf(X, normalize=normalize))

    def sample(self, n, seed) -> np.ndarray:
        """Draw ``n`` rows from the renormalized mixture; deterministic in ``seed``."""
        p = self.weights / self.weights.sum()
        chol = np.linalg.cholesky(self.covariances)
        out = np.empty((n, self.dim))
        for c, (lo, hi) in enumerate(_chunks(n)):
            rng = rng_for(seed, c)
            labels = rng.choice(self.n_components, size=hi - lo, p=p)
            eps = rng.standard_normal((hi - lo, self.dim))
            out[lo:hi] = self.means[labels] + np.einsum("nij,nj->ni", chol[labels], eps)
        return out


def as_samples(X, dim=None) -> np.ndarray:
    """Coerce ``X`` to an (N, D) float array; 1-D input is one column when dim is 1."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1) if dim in (None, 1) else X.reshape(1, -1)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"expected samples of dimension {dim}, got {X.shape[1]}")
    return X


def _chunks(n):
    for start in range(0, n, SAMPLE_CHUNK):
        yield start, min(n, start + SAMPLE_CHUNK)


def poisson_weight(lam, i) -> float:
    """Poisson probability e^-lam lam^i / i!, evaluated in log space."""
    if lam < 0 or i < 0:
        raise ValueError(f"poisson_weight needs lam >= 0 and i >= 0, got lam={lam}, i={i}")
    if lam == 0:
        return 1.0 if i == 0 else 0.0
    return math.exp(-lam + i * math.log(lam) - math.lgamma(i + 1))


def hqn_gmm_1d(params: HqnParams) -> GmmModel:
    return hqn_gmm_nd(params, 1)


def hqn_gmm_nd(params: HqnParams, dim: int) -> GmmModel:
    """Multivariate embedding: component i has mean (mu_cl + i) * ones(D), covariance sigma_cl^2 I."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    idx = np.arange(params.r_max + 1, dtype=np.float64)
    means = np.repeat((params.mu_cl + idx)[:, None], dim, axis=1)
    covs = np.broadcast_to(params.sigma_cl**2 * np.eye(dim), (idx.size, dim, dim)).copy()
    return GmmModel(params.weights, means, covs, normalized=False)


def sample_truncated_poisson(lam, r_max, n, rng) -> np.ndarray:
    """Poisson counts conditioned on count <= r_max, by rejection."""
    k = rng.poisson(lam, n)
    bad = np.flatnonzero(k > r_max)
    while bad.size:
        k[bad] = rng.poisson(lam, bad.size)
        bad = bad[k[bad] > r_max]
    return k


def sample_hqn(params: HqnParams, n: int, seed: int) -> np.ndarray:
    """``n`` draws of truncated-Poisson count plus Gaussian(mu_cl, sigma_cl^2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty(n)
    for c, (lo, hi) in enumerate(_chunks(n)):
        rng = rng_for(seed, c)
        counts = sample_truncated_poisson(params.lam, params.r_max, hi - lo, rng)
        out[lo:hi] = counts + rng.normal(params.mu_cl, params.sigma_cl, hi - lo)
    return out


def simulate_channel(config: ChannelConfig, noise, x, seed: int) -> np.ndarray:
    """y = T x + z, with z drawn from ``noise`` (HqnParams or a 1-D GmmModel)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("x must be nonempty")
    if isinstance(noise, HqnParams):
        z = sample_hqn(noise, x.size, seed)
    else:
        z = noise.sample(x.size, seed)[:, 0]
    return config.t_coeff * x + z


def received_pdf(config: ChannelConfig, params: HqnParams) -> GmmModel:
    """Density of Y for Gaussian input: weights w_r, means T mu_x + mu_cl + r,
    variance T^2 sigma_x^2 + sigma_cl^2."""
    return compose_received(config, hqn_gmm_1d(params))


def compose_received(config: ChannelConfig, noise: GmmModel) -> GmmModel:
    """Convolve a 1-D noise mixture with the scaled Gaussian input T X."""
    if noise.dim != 1:
        raise ValueError("received density is defined for 1-D noise")
    t = config.t_coeff
    means = noise.means + t * config.mu_x
    covs = noise.covariances + (t * config.sigma_x) ** 2
    return GmmModel(noise.weights, means, covs, normalized=noise.normalized)


def mixture_moments(model: GmmModel) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of the renormalized mixture."""
    total = model.weights.sum()
    if total <= 0:
        raise ValueError("mixture has zero total weight")
    p = model.weights / total
    mean = p @ model.means
    second = np.einsum("r,rij->ij", p, model.covariances) + np.einsum(
        "r,ri,rj->ij", p, model.means, model.means
    )
    return mean, second - np.outer(mean, mean)
