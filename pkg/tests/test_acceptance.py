"""End-to-end acceptance checks, one printed PASS/FAIL line each."""
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from hqnrate import capacity, cli, dagmm
from hqnrate.capacity import awgn_rate, capacity_estimate, entropy_mc
from hqnrate.datagen import gen_cluster3d
from hqnrate.gmm import e_step, fit_em
from hqnrate.metrics import adjusted_rand_index, match_means
from hqnrate.noise import ChannelConfig, GmmModel, HqnParams, hqn_gmm_1d

from conftest import three_cluster_1d

MASS_L3_R6 = 0.96649146469115879309  # mpmath, 30 digits
H_NORMAL = 0.5 * math.log(2 * math.pi * math.e)


def test_c01_truncated_mass(criterion):
    got = HqnParams(3.0, 6).truncated_mass
    criterion(1, abs(got - MASS_L3_R6) <= 5e-4, f"truncated mass {got:.8f} (reference {MASS_L3_R6:.8f})")


def test_c02_pdf_quadrature(criterion):
    t = time.perf_counter()
    r = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        p = HqnParams(r.uniform(0, 8), int(r.integers(0, 12)), r.uniform(-3, 3), r.uniform(0.05, 3))
        m = hqn_gmm_1d(p)
        pts = list(p.mu_cl + np.arange(p.r_max + 1))
        val, _ = integrate.quad(lambda z: m.pdf(np.array([z]))[0], p.mu_cl - 10 * p.sigma_cl,
                                p.r_max + p.mu_cl + 10 * p.sigma_cl, points=pts, limit=500,
                                epsabs=1e-12, epsrel=1e-12)
        worst = max(worst, abs(val - p.truncated_mass))
    dt = time.perf_counter() - t
    criterion(2, worst < 1e-6 and dt < 5, f"max |quadrature - mass| {worst:.2e} over 20 sets ({dt:.1f} s)")


def test_c03_em_monotone(criterion):
    t = time.perf_counter()
    worst = np.inf
    for seed in range(100):
        X = gen_cluster3d(seed=seed).data
        _, trace = fit_em(X, 3, seed=seed)
        worst = min(worst, float(np.min(np.diff(trace.loglik), initial=0.0)))
    dt = time.perf_counter() - t
    criterion(3, worst >= -1e-9 and dt < 60, f"min per-iteration log-likelihood change {worst:.3e} ({dt:.1f} s)")


def test_c04_em_recovery(criterion):
    t = time.perf_counter()
    hits = 0
    for seed in range(100):
        x, _ = three_cluster_1d(5000, seed)
        model, _ = fit_em(x, 3, seed=seed)
        hits += match_means(model.means[:, 0], [0.0, 5.0, 10.0])[0] <= 0.1
    dt = time.perf_counter() - t
    criterion(4, hits >= 95 and dt < 60, f"means within 0.1 in {hits}/100 seeds ({dt:.1f} s)")


def test_c05_gradcheck_cli(criterion, tmp_path, capsys):
    t = time.perf_counter()
    code = cli.main(["gradcheck", "--out", str(tmp_path)])
    dt = time.perf_counter() - t
    rows = (tmp_path / "gradcheck.csv").read_text().splitlines()[1:]
    worst = max(float(r.rsplit(",", 1)[1]) for r in rows)
    criterion(5, code == 0 and len(rows) == 3 and dt < 10,
              f"gradcheck exit {code}, worst relative error {worst:.2e} over {len(rows)} nets ({dt:.1f} s)")


def test_c06_latent_stationarity(criterion):
    t = time.perf_counter()
    from test_dagmm import random_state
    r = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        st, X = random_state(r, n=int(r.integers(5, 40)), lam=r.uniform(0.01, 2), rho=r.uniform(0.1, 10))
        gamma = dagmm.latent_responsibilities(st).gamma
        codes = dagmm.update_latent_codes(st, X, gamma)
        worst = max(worst, float(np.linalg.norm(dagmm.latent_block_gradient(st, X, gamma, codes))))
    dt = time.perf_counter() - t
    criterion(6, worst < 1e-8 and dt < 5, f"max gradient norm at latent update {worst:.2e} over 50 instances")


def test_c07_entropy(criterion):
    t = time.perf_counter()
    h1, _ = entropy_mc(GmmModel([1.0], [[0.0]], [1.0]), 200_000, 0)
    h2, _ = entropy_mc(GmmModel([0.5, 0.5], [[0.0], [100.0]], [1.0, 1.0]), 200_000, 1)
    dt = time.perf_counter() - t
    ok = abs(h1 - H_NORMAL) <= 0.01 and abs(h2 - H_NORMAL - math.log(2)) <= 0.01 and dt < 10
    criterion(7, ok, f"h(N(0,1)) {h1:.5f}, h(two far modes) {h2:.5f} nats ({dt:.1f} s)")


def test_c08_awgn_limit(criterion, tmp_path):
    t = time.perf_counter()
    single = capacity_estimate(ChannelConfig(1.0, 0.0, 1.0), HqnParams(1e-6, 6, 0.0, 1.0), 200_000, 0).bits
    grid = [0, 5, 10, 15, 20]
    cfg = tmp_path / "awgn.json"
    cfg.write_text(json.dumps({"scenario": {"lam": 1e-6, "t_coeff": 1.0, "sigma_cl": 1.0, "beta_rec": 1.0},
                               "sweep": {"snr_db": grid, "methods": ["baseline"]}}))
    code = cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-timestamp"])
    rows = (tmp_path / "o" / "capacity.csv").read_text().splitlines()[1:]
    rates = np.array([float(r.split(",")[1]) for r in rows])
    dev = float(np.max(np.abs(rates - awgn_rate(10 ** (np.array(grid) / 10)))))
    dt = time.perf_counter() - t
    ok = abs(single - 0.5) <= 0.01 and code == 0 and dev <= 0.02 and dt < 30
    criterion(8, ok, f"unit-SNR rate {single:.4f} bits, sweep max deviation {dev:.4f} bits ({dt:.1f} s)")


def test_c09_baseline_monotone(criterion, tmp_path):
    t = time.perf_counter()
    cfg = tmp_path / "base.json"
    cfg.write_text(json.dumps({"sweep": {"methods": ["baseline"]}}))
    code = cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--no-timestamp"])
    rows = (tmp_path / "capacity.csv").read_text().splitlines()[1:]
    rates = np.array([float(r.split(",")[1]) for r in rows])
    drop = float(np.min(np.diff(rates)))
    dt = time.perf_counter() - t
    criterion(9, code == 0 and drop >= -0.01 and dt < 60,
              f"baseline rates {np.round(rates, 3).tolist()}, smallest step {drop:.4f} ({dt:.1f} s)")


@pytest.mark.slow
def test_c10_dagmm_vs_gmm_warped(criterion):
    t = time.perf_counter()
    wins_rate = wins_xent = 0
    detail = []
    for seed in range(10):
        cfg, _ = cli.resolve({"seed": seed, "scenario": {"sigma_cl": 0.25, "warp": 0.5}})
        scenario, _ = cli.build_scenario(cfg)
        opts = cli.build_fit_options(cfg)
        lowest = min(cfg["sweep"]["snr_db"])
        curve = capacity.snr_sweep(scenario, [lowest], ("gmm", "dagmm"), cfg["sweep"]["mc_samples"], seed, opts)
        rg, rd = curve.rate_bits["gmm"][0], curve.rate_bits["dagmm"][0]
        xg, xd = curve.cross_entropy.get("gmm", np.nan), curve.cross_entropy.get("dagmm", np.nan)
        wins_rate += bool(rd >= rg)
        wins_xent += bool(xd <= xg)
        detail.append(f"{rd - rg:+.3f}/{xd - xg:+.3f}")
    dt = time.perf_counter() - t
    ok = wins_rate >= 8 and wins_xent >= 8 and dt < 600
    criterion(10, ok, f"DAGMM rate >= GMM in {wins_rate}/10, cross-entropy <= GMM in {wins_xent}/10 "
                      f"(rate/xent differences {' '.join(detail)}; {dt:.0f} s)")


@pytest.mark.slow
def test_c11_dagmm_clustering(criterion):
    t = time.perf_counter()
    aris = []
    for seed in range(10):
        ds = gen_cluster3d(k=3, warp=0.5, seed=seed)
        _, rep = dagmm.fit_dagmm(ds.data, [3, 16, 8, 2, 8, 16, 3], dagmm.DagmmHyper(seed=seed))
        aris.append(adjusted_rand_index(ds.labels, rep.labels))
    dt = time.perf_counter() - t
    hits = sum(a >= 0.9 for a in aris)
    criterion(11, hits >= 8 and dt < 300, f"ARI >= 0.9 in {hits}/10 seeds, ARIs {np.round(aris, 3).tolist()} ({dt:.0f} s)")


def _artifacts(root):
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.suffix in (".csv", ".svg")}


def test_c12_reproducible(criterion, tmp_path):
    t = time.perf_counter()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 4}))
    codes = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        for argv in (["gen"], ["fit", "--method", "gmm"], ["fit", "--method", "dagmm"], ["sweep"], ["gradcheck"]):
            codes.append(cli.main(argv + ["--config", str(cfg), "--out", out, "--no-timestamp"]))
    a, b = _artifacts(tmp_path / "a"), _artifacts(tmp_path / "b")
    same = sorted(a) == sorted(b) and all(a[k] == b[k] for k in a)
    dt = time.perf_counter() - t
    criterion(12, set(codes) == {0} and same and len(a) >= 8 and dt < 120,
              f"{len(a)} CSV/SVG files byte-identical across two runs: {same} ({dt:.0f} s)")
