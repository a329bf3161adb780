"""Monte-Carlo entropy and achievable-rate estimation for the additive channel.

Rates are mutual information h(Y) - h(Z) of Y = T X + Z with Gaussian X,
in bits per channel use, scaled by the reconciliation efficiency.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from hqnrate import gmm as gmm_mod
from hqnrate.autoencoder import forward
from hqnrate.dagmm import DagmmHyper, DagmmState, fit_dagmm
from hqnrate.gmm import default_floor
from hqnrate.noise import (
    ChannelConfig,
    GmmModel,
    HqnParams,
    as_samples,
    compose_received,
    hqn_gmm_1d,
    mixture_moments,
    rng_for,
    sample_hqn,
    seed_key,
    simulate_channel,
)

log = logging.getLogger(__name__)

LOG_FLOOR = -700.0
METHODS = ("baseline", "gmm", "dagmm")
_METHOD_CODE = {m: i for i, m in enumerate(METHODS)}


def entropy_mc(model: GmmModel, n: int, seed) -> tuple[float, float]:
    """Differential entropy in nats and its standard error, from ``n`` model draws."""
    if n < 2:
        raise ValueError("n must be >= 2")
    z = model.sample(n, seed)
    neg = -model.log_pdf(z, normalize=True)
    return float(neg.mean()), float(neg.std(ddof=1) / math.sqrt(n))


@dataclass
class CrossEntropy:
    value: float
    stderr: float
    n_clamped: int


def cross_entropy_mc(samples, fitted: GmmModel) -> CrossEntropy:
    """-(1/n) sum ln f_hat(z_k); log densities below -700 are clamped and counted."""
    z = as_samples(samples, fitted.dim)
    lp = fitted.log_pdf(z, normalize=True)
    low = ~(lp >= LOG_FLOOR)
    lp = np.where(low, LOG_FLOOR, lp)
    n = lp.size
    return CrossEntropy(float(-lp.mean()), float(lp.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0, int(low.sum()))


@dataclass
class RateEstimate:
    bits: float
    stderr: float


def capacity_estimate(config: ChannelConfig, noise, n: int, seed) -> RateEstimate:
    """I(X; Y) = h(Y) - h(Z) in bits, estimated on paired draws.

    ``noise`` is HqnParams (sampled directly) or a 1-D GmmModel. Both
    entropies are evaluated on the same noise draws, which cancels most of
    the Monte-Carlo error in the difference.
    """
    if isinstance(noise, HqnParams):
        noise_model = hqn_gmm_1d(noise)
    else:
        noise_model = noise
    if noise_model.dim != 1:
        raise ValueError("capacity needs a 1-D noise model")
    rng = rng_for(seed, 0)
    x = rng.normal(config.mu_x, config.sigma_x, n)
    y = simulate_channel(config, noise, x, seed_key(seed, 1))
    z = y - config.t_coeff * x
    received = compose_received(config, noise_model)
    diff = noise_model.log_pdf(z, normalize=True) - received.log_pdf(y, normalize=True)
    return RateEstimate(
        float(diff.mean() / math.log(2)),
        float(diff.std(ddof=1) / math.sqrt(n) / math.log(2)),
    )


def awgn_rate(snr) -> np.ndarray:
    return 0.5 * np.log2(1.0 + np.asarray(snr, dtype=np.float64))


def dagmm_noise_model(state: DagmmState, noise_samples, floor=None) -> GmmModel:
    """Input-space mixture from a fitted DAGMM.

    Component r keeps the latent weight, is centred on the decoded latent
    mean, and takes the responsibility-weighted covariance of the input
    residuals about that centre. Components with no responsibility mass are
    dropped and the weights renormalized.
    """
    X = as_samples(noise_samples, state.ae.encoder.n_in)
    if floor is None:
        floor = default_floor(X)
    codes = forward(state.ae.encoder, X)[0]
    gamma = gmm_mod.e_step(state.latent_gmm, codes).gamma
    centres = forward(state.ae.decoder, state.latent_gmm.means)[0]
    nk = gamma.sum(axis=0)
    keep = nk > 10 * gmm_mod.EPS * X.shape[0]
    if not keep.all():
        log.info("dropping empty components %s", np.flatnonzero(~keep).tolist())
    d = X.shape[1]
    weights, means, covs = [], [], []
    for r in np.flatnonzero(keep):
        diff = X - centres[r]
        c = (gamma[:, r, None] * diff).T @ diff / nk[r]
        weights.append(state.latent_gmm.weights[r])
        means.append(centres[r])
        covs.append(gmm_mod.apply_floor(c, floor))
    w = np.array(weights)
    return GmmModel(w / w.sum(), np.array(means), np.array(covs), normalized=True)


@dataclass(frozen=True)
class Scenario:
    """Noise law, channel and post-processing for an SNR sweep.

    ``warp`` > 0 replaces each noise draw z by z + warp * sin(z), a smooth
    monotone distortion of the cluster shapes (monotone for warp < 1).
    """

    hqn: HqnParams
    channel: ChannelConfig
    beta_rec: float = 0.95
    warp: float = 0.0

    def sample_noise(self, n, seed) -> np.ndarray:
        z = sample_hqn(self.hqn, n, seed)
        return z + self.warp * np.sin(z) if self.warp else z

    def noise_variance(self, n_mc=400_000, seed=12345) -> float:
        if not self.warp:
            return float(mixture_moments(hqn_gmm_1d(self.hqn))[1][0, 0])
        return float(np.var(self.sample_noise(n_mc, seed)))


@dataclass
class FitOptions:
    r_count: int = 7
    n_train: int = 2000
    n_holdout: int = 20000
    em_max_iters: int = 300
    em_tol: float = 1e-6
    arch: tuple = (1, 4, 1, 4, 1)
    dagmm: DagmmHyper = field(default_factory=lambda: DagmmHyper(r_count=7))


@dataclass
class CapacityCurve:
    snr_db: np.ndarray
    rate_bits: dict  # method -> array (NaN marks a failed point)
    stderr: dict
    mc_samples: int
    seed: int
    cross_entropy: dict = field(default_factory=dict)  # method -> held-out nats
    failures: list = field(default_factory=list)
    models: dict = field(default_factory=dict)

    @property
    def methods(self):
        return list(self.rate_bits)

    def write_csv(self, path):
        cols = ["snr_db"] + [f"rate_{m}" for m in self.methods] + [f"stderr_{m}" for m in self.methods]
        lines = [",".join(cols)]
        for i, s in enumerate(self.snr_db):
            cells = [_fmt(s)] + [_fmt(self.rate_bits[m][i]) for m in self.methods]
            cells += [_fmt(self.stderr[m][i]) for m in self.methods]
            lines.append(",".join(cells))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _fmt(v):
    return "" if not np.isfinite(v) else format(float(v), ".10g")


def fit_noise_models(scenario: Scenario, methods, opts: FitOptions, seed):
    """Fit the requested noise models on one training draw; returns
    (models, held-out cross-entropies, failures)."""
    models, xent, failures = {}, {}, []
    if "baseline" in methods:
        models["baseline"] = hqn_gmm_1d(scenario.hqn)
    fitted = [m for m in methods if m != "baseline"]
    if not fitted:
        return models, xent, failures
    train = scenario.sample_noise(opts.n_train, [seed, 101])
    holdout = scenario.sample_noise(opts.n_holdout, [seed, 102])
    if "baseline" in methods:
        xent["baseline"] = cross_entropy_mc(holdout, models["baseline"]).value
    if "gmm" in methods:
        try:
            model, _ = gmm_mod.fit_em(
                train, opts.r_count, max_iters=opts.em_max_iters, tol=opts.em_tol, seed=seed
            )
            models["gmm"] = model
            xent["gmm"] = cross_entropy_mc(holdout, model).value
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures.append(("gmm", None, str(exc)))
    if "dagmm" in methods:
        try:
            hyper = DagmmHyper(**{**opts.dagmm.__dict__, "seed": seed, "r_count": opts.r_count})
            state, _ = fit_dagmm(train, list(opts.arch), hyper)
            model = dagmm_noise_model(state, train)
            models["dagmm"] = model
            xent["dagmm"] = cross_entropy_mc(holdout, model).value
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures.append(("dagmm", None, str(exc)))
    return models, xent, failures


def snr_sweep(scenario: Scenario, grid_db, methods=METHODS, n=100_000, seed=0,
              opts: FitOptions | None = None, jobs=1) -> CapacityCurve:
    """Achievable rate versus SNR for each method.

    SNR = T^2 sigma_x^2 / Var(Z); sigma_x is rescaled per grid point and
    shared by all methods. Fitted models are trained once per sweep.
    """
    grid = np.asarray(grid_db, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("SNR grid must be nonempty and strictly increasing")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    methods = [m for m in METHODS if m in methods]
    if scenario.channel.t_coeff <= 0:
        raise ValueError("SNR sweep needs T > 0")
    opts = opts or FitOptions()
    models, xent, failures = fit_noise_models(scenario, methods, opts, seed)
    var_z = scenario.noise_variance()
    t = scenario.channel.t_coeff

    jobs_list = [(i, m) for i in range(grid.size) for m in methods]

    def run(job):
        i, m = job
        if m not in models:
            return job, None
        snr = 10.0 ** (grid[i] / 10.0)
        cfg = ChannelConfig(t, scenario.channel.mu_x, math.sqrt(snr * var_z) / t)
        try:
            noise = scenario.hqn if m == "baseline" else models[m]
            return job, capacity_estimate(cfg, noise, n, [seed, i, _METHOD_CODE[m]])
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            return job, exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, jobs_list))
    else:
        results = [run(j) for j in jobs_list]

    rates = {m: np.full(grid.size, np.nan) for m in methods}
    errs = {m: np.full(grid.size, np.nan) for m in methods}
    for (i, m), res in results:
        if isinstance(res, RateEstimate):
            rates[m][i] = scenario.beta_rec * res.bits
            errs[m][i] = scenario.beta_rec * res.stderr
        elif isinstance(res, Exception):
            failures.append((m, float(grid[i]), str(res)))
    return CapacityCurve(grid, rates, errs, n, seed, xent, failures, models)
