"""Deep autoencoder + latent Gaussian mixture trained by alternating
minimization of an augmented Lagrangian.

Decision variables per sample are a latent code ``x_hat_i`` and a scaled
dual ``u_i``; the coupling constraint is ``x_hat_i = f_enc(x_i)``. One outer
iteration runs

    responsibilities -> latent codes (closed form) -> mixture parameters
    -> network (gradient steps) -> duals

with the responsibilities held fixed for the first two block updates, so
both are exact minimizers of their block of the majorized objective.

Scalar conventions: the reconstruction term is ``||x_i - f_dec(f_enc(x_i))||^2``
summed over coordinates, and the penalty is ``(rho/2) ||x_hat_i - f_enc(x_i) + u_i||^2``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from hqnrate import autoencoder as ae_mod
from hqnrate.autoencoder import AeParams, backward, forward
from hqnrate.gmm import Responsibilities, default_floor, e_step, fit_em, m_step, model_from_dict, model_to_dict
from hqnrate.noise import GmmModel, as_samples

log = logging.getLogger(__name__)


@dataclass
class DagmmHyper:
    lambda_tilde: float = 0.1
    rho_tilde: float = 1.0
    r_count: int = 3
    outer_iters: int = 50
    net_steps_per_outer: int = 20
    step: float = 0.05
    tol: float = 1e-6
    seed: int = 0
    pretrain_epochs: int = 30
    pretrain_batch: int = 64
    pretrain_step: float = 0.05
    em_max_iters: int = 300
    latent_floor: float = 0.2  # relative to trace(cov(initial codes)) / d
    em_restarts: int = 5

    def __post_init__(self):
        if not self.lambda_tilde >= 0 or not self.rho_tilde > 0:
            raise ValueError("lambda_tilde must be >= 0 and rho_tilde > 0")
        if self.r_count < 1:
            raise ValueError("r_count must be >= 1")


@dataclass
class DagmmState:
    ae: AeParams
    latent_codes: np.ndarray
    duals: np.ndarray
    latent_gmm: GmmModel
    hyper: DagmmHyper
    floor: float = 1e-10

    def __post_init__(self):
        if self.latent_codes.shape != self.duals.shape:
            raise ValueError("latent codes and duals must share a shape")
        if self.latent_gmm.dim != self.latent_codes.shape[1]:
            raise ValueError("latent mixture dimension must match the latent codes")

    def replace(self, **changes) -> "DagmmState":
        fields = dict(
            ae=self.ae, latent_codes=self.latent_codes, duals=self.duals,
            latent_gmm=self.latent_gmm, hyper=self.hyper, floor=self.floor,
        )
        fields.update(changes)
        return DagmmState(**fields)

    def to_dict(self):
        return {
            "ae": self.ae.to_dict(),
            "latent_gmm": model_to_dict(self.latent_gmm, self.floor),
            "latent_codes": self.latent_codes.tolist(),
            "duals": self.duals.tolist(),
            "hyper": asdict(self.hyper),
        }

    @classmethod
    def from_dict(cls, doc):
        gmm_doc = doc["latent_gmm"]
        return cls(
            AeParams.from_dict(doc["ae"]),
            np.array(doc["latent_codes"], dtype=np.float64),
            np.array(doc["duals"], dtype=np.float64),
            model_from_dict(gmm_doc),
            DagmmHyper(**doc["hyper"]),
            gmm_doc.get("floor") or 1e-10,
        )


@dataclass
class TrainReport:
    aug_lagrangian: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    nll: list = field(default_factory=list)
    violation: list = field(default_factory=list)
    labels: np.ndarray | None = None
    labels_first: np.ndarray | None = None  # hard labels after the first outer iteration
    pretrain_trace: list = field(default_factory=list)
    stopped_early: bool = False
    error: str | None = None

    def rows(self):
        return list(zip(range(len(self.recon)), self.aug_lagrangian, self.recon, self.nll, self.violation))


class DagmmError(FloatingPointError):
    def __init__(self, message, state=None, report=None, index=None):
        super().__init__(message)
        self.state = state
        self.report = report
        self.index = index


def _encode(ae, X):
    return forward(ae.encoder, X)[0]


def _terms(state: DagmmState, X):
    """Per-sample (reconstruction, negative latent log-likelihood, penalty residual)."""
    X = as_samples(X, state.ae.encoder.n_in)
    enc = _encode(state.ae, X)
    y = forward(state.ae.decoder, enc)[0]
    recon = np.sum((X - y) ** 2, axis=1)
    nll = -state.latent_gmm.log_pdf(state.latent_codes, normalize=True)
    resid = state.latent_codes - enc + state.duals
    return recon, nll, resid


def _check_finite(values, what):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise DagmmError(f"non-finite {what} at sample {bad[0]}", index=int(bad[0]))


def objective(state: DagmmState, X) -> float:
    """(1/N) sum_i ( ||x_i - y_i||^2 - lambda * ln p(x_hat_i) )."""
    recon, nll, _ = _terms(state, X)
    per = recon + state.hyper.lambda_tilde * nll
    _check_finite(per, "objective")
    return float(np.mean(per))


def augmented_lagrangian(state: DagmmState, X) -> float:
    """Unnormalized sum over samples of the objective terms plus the dual penalty."""
    recon, nll, resid = _terms(state, X)
    h = state.hyper
    per = recon + h.lambda_tilde * nll + 0.5 * h.rho_tilde * np.sum(resid**2, axis=1)
    _check_finite(per, "augmented Lagrangian")
    return float(np.sum(per))


def constraint_violation(state: DagmmState, X) -> float:
    """Root-mean-square of ||x_hat_i - f_enc(x_i)|| over samples."""
    X = as_samples(X, state.ae.encoder.n_in)
    d = state.latent_codes - _encode(state.ae, X)
    return float(np.sqrt(np.mean(np.sum(d**2, axis=1))))


def latent_responsibilities(state: DagmmState) -> Responsibilities:
    return e_step(state.latent_gmm, state.latent_codes)


def _precisions(gmm: GmmModel):
    prec = np.linalg.inv(gmm.covariances)
    return 0.5 * (prec + np.transpose(prec, (0, 2, 1)))


def latent_block_gradient(state: DagmmState, X, gamma, codes=None) -> np.ndarray:
    """Gradient w.r.t. each latent code of the majorized augmented Lagrangian
    (responsibilities ``gamma`` held fixed); shape (N, d)."""
    X = as_samples(X, state.ae.encoder.n_in)
    codes = state.latent_codes if codes is None else codes
    h = state.hyper
    gmm = state.latent_gmm
    prec = _precisions(gmm)
    enc = _encode(state.ae, X)
    # sum_r gamma_ir P_r (x_hat_i - mu_r)
    pull = np.einsum("nr,rij,nrj->ni", gamma, prec, codes[:, None, :] - gmm.means[None])
    return h.lambda_tilde * pull + h.rho_tilde * (codes - enc + state.duals)


def update_latent_codes(state: DagmmState, X, gamma) -> np.ndarray:
    """x_hat_i = (lam sum_r g_ir P_r + rho I)^-1 (lam sum_r g_ir P_r mu_r + rho (f_enc(x_i) - u_i))."""
    X = as_samples(X, state.ae.encoder.n_in)
    h = state.hyper
    gmm = state.latent_gmm
    d = gmm.dim
    prec = _precisions(gmm)
    enc = _encode(state.ae, X)
    A = h.lambda_tilde * np.einsum("nr,rij->nij", gamma, prec) + h.rho_tilde * np.eye(d)
    b = h.lambda_tilde * gamma @ np.einsum("rij,rj->ri", prec, gmm.means)
    b = b + h.rho_tilde * (enc - state.duals)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise DagmmError("latent-code system is not positive definite") from exc
    y = np.linalg.solve(L, b[:, :, None])
    return np.linalg.solve(np.transpose(L, (0, 2, 1)), y)[:, :, 0]


def update_gmm_params(state: DagmmState, gamma) -> GmmModel:
    return m_step(state.latent_codes, gamma, state.floor, seed=state.hyper.seed)


def update_duals(state: DagmmState, X) -> np.ndarray:
    X = as_samples(X, state.ae.encoder.n_in)
    return state.duals + (state.latent_codes - _encode(state.ae, X))


def network_loss_and_grad(state: DagmmState, X, ae: AeParams | None = None):
    """L_net = (1/N) sum ||x - dec(enc(x))||^2 + (rho / 2N) sum ||x_hat - enc(x) + u||^2."""
    ae = state.ae if ae is None else ae
    X = as_samples(X, ae.encoder.n_in)
    n = X.shape[0]
    rho = state.hyper.rho_tilde
    z, enc_cache = forward(ae.encoder, X)
    y, dec_cache = forward(ae.decoder, z)
    diff = y - X
    resid = state.latent_codes - z + state.duals
    loss = float(np.sum(diff**2) / n + 0.5 * rho * np.sum(resid**2) / n)
    g_dec, d_z = backward(ae.decoder, dec_cache, 2.0 * diff / n)
    d_z = d_z - rho * resid / n
    g_enc, _ = backward(ae.encoder, enc_cache, d_z)
    return loss, AeParams(g_enc, g_dec)


def update_network(state: DagmmState, X, steps=None, step=None) -> AeParams:
    """Gradient descent on L_net with backtracking: a step is halved until
    the loss does not increase, so L_net is monotone within one call."""
    steps = state.hyper.net_steps_per_outer if steps is None else steps
    step = state.hyper.step if step is None else step
    ae = state.ae.copy()
    if step == 0:
        return ae
    loss, grads = network_loss_and_grad(state, X, ae)
    if not np.isfinite(loss):
        raise DagmmError(f"network loss became {loss}")
    for _ in range(steps):
        eta = step
        for _ in range(40):
            trial = ae.copy()
            ae_mod.sgd_update(trial, grads, eta)
            new_loss, new_grads = network_loss_and_grad(state, X, trial)
            if np.isfinite(new_loss) and new_loss <= loss:
                break
            eta *= 0.5
        else:
            break  # no descent at any scale; stationary to working precision
        ae, loss, grads = trial, new_loss, new_grads
    return ae


def assign_clusters(state: DagmmState, codes=None) -> np.ndarray:
    """Hard labels by maximum responsibility; ties go to the lowest index."""
    codes = state.latent_codes if codes is None else codes
    lp = state.latent_gmm.component_log_prob(codes, normalize=True)
    return np.argmax(lp, axis=1)


def _record(report, state, X):
    recon, nll, resid = _terms(state, X)
    h = state.hyper
    report.recon.append(float(np.mean(recon)))
    report.nll.append(float(np.mean(nll)))
    report.aug_lagrangian.append(
        float(np.sum(recon + h.lambda_tilde * nll + 0.5 * h.rho_tilde * np.sum(resid**2, axis=1)))
    )
    report.violation.append(constraint_violation(state, X))
    for name in ("aug_lagrangian", "recon", "nll", "violation"):
        if not np.isfinite(getattr(report, name)[-1]):
            raise DagmmError(f"non-finite {name} at outer iteration {len(report.recon) - 1}")


def initial_state(X, ae: AeParams, hyper: DagmmHyper) -> DagmmState:
    """Latent codes = encoder output, zero duals, latent mixture fitted by EM
    (best of ``em_restarts`` seeded starts)."""
    X = as_samples(X, ae.encoder.n_in)
    codes = _encode(ae, X)
    floor = default_floor(codes) * hyper.latent_floor / 1e-6
    best = None
    for k in range(max(1, hyper.em_restarts)):
        gmm, trace = fit_em(codes, hyper.r_count, max_iters=hyper.em_max_iters, seed=[hyper.seed, k], floor=floor)
        ll = max(trace.loglik)
        if best is None or ll > best[1]:
            best = (gmm, ll)
    gmm = best[0]
    return DagmmState(ae, codes, np.zeros_like(codes), gmm, hyper, floor)


def outer_step(state: DagmmState, X) -> DagmmState:
    resp = latent_responsibilities(state)
    state = state.replace(latent_codes=update_latent_codes(state, X, resp.gamma))
    state = state.replace(latent_gmm=update_gmm_params(state, resp.gamma))
    state = state.replace(ae=update_network(state, X))
    return state.replace(duals=update_duals(state, X))


def fit_dagmm(X, arch, hyper: DagmmHyper | None = None, ae: AeParams | None = None):
    """Pretrain, initialize, then alternate outer iterations.

    Returns (DagmmState, TrainReport). Report row 0 describes the
    initialized state; row k the state after outer iteration k. On a
    numerical failure a DagmmError is raised carrying the last good state
    and the partial report.
    """
    hyper = hyper or DagmmHyper()
    X = as_samples(X)
    if X.shape[0] <= hyper.r_count:
        raise ValueError("need more samples than latent components")
    report = TrainReport()
    if ae is None:
        ae = ae_mod.init_autoencoder(arch, seed=[hyper.seed, 1])
    if hyper.pretrain_epochs > 0:
        ae, report.pretrain_trace = ae_mod.train_autoencoder(
            ae, X, hyper.pretrain_epochs, hyper.pretrain_batch, hyper.pretrain_step, seed=[hyper.seed, 2]
        )
    state = initial_state(X, ae, hyper)
    _record(report, state, X)
    for it in range(hyper.outer_iters):
        try:
            new = outer_step(state, X)
            _record(report, new, X)
        except (DagmmError, FloatingPointError, np.linalg.LinAlgError) as exc:
            report.error = f"outer iteration {it + 1}: {exc}"
            report.labels = assign_clusters(state)
            raise DagmmError(report.error, state=state, report=report) from exc
        state = new
        if it == 0:
            report.labels_first = assign_clusters(state)
        if (
            report.violation[-1] < hyper.tol
            and abs(report.aug_lagrangian[-1] - report.aug_lagrangian[-2]) < hyper.tol
        ):
            report.stopped_early = True
            break
    report.labels = assign_clusters(state)
    if report.labels_first is None:
        report.labels_first = report.labels
    return state, report


def save_state(path, state: DagmmState):
    with open(path, "w") as fh:
        json.dump(state.to_dict(), fh)
        fh.write("\n")


def load_state(path) -> DagmmState:
    with open(path) as fh:
        return DagmmState.from_dict(json.load(fh))
