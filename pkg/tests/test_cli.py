import json
import time

import numpy as np
import pytest

from hqnrate import autoencoder, cli, dagmm
from hqnrate.capacity import awgn_rate
from hqnrate.csvio import read_matrix

SMALL_DAGMM = {"data": {"n": 400}, "fit": {"dagmm": {"outer_iters": 5, "pretrain_epochs": 5}}}


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def manifest(path):
    return json.loads(path.read_text())


def test_gen_default_and_reproducible(tmp_path):
    assert cli.main(["gen", "--out", str(tmp_path / "a"), "--no-timestamp"]) == 0
    assert cli.main(["gen", "--out", str(tmp_path / "b"), "--no-timestamp"]) == 0
    X, labels, comment = read_matrix(tmp_path / "a" / "dataset.csv")
    assert X.shape == (3000, 3) and labels.shape == (3000,)
    assert json.loads(comment)["generator"] == "cluster3d"
    ma, mb = manifest(tmp_path / "a" / "manifest-gen.json"), manifest(tmp_path / "b" / "manifest-gen.json")
    assert ma["outputs"]["dataset.csv"] == mb["outputs"]["dataset.csv"]
    assert ma["status"] == "ok" and ma["seed"] == 0 and ma["version"]


def test_unknown_key_is_a_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"scenario": {"lamda": 3}})
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out)]) == 2
    assert "scenario.lamda" in capsys.readouterr().err
    m = manifest(out / "manifest-sweep.json")
    assert m["status"] == "failed" and m["exit_code"] == 2 and "scenario.lamda" in m["error"]


@pytest.mark.parametrize("doc,needle", [
    ({"fit": {"dagmm": {"rho": 1}}}, "fit.dagmm.rho"),
    ({"scenario": {"lam": "three"}}, "scenario.lam"),
    ({"scenario": {"lam": -1.0}}, "scenario"),
    ({"sweep": {"snr_db": [5, 0]}}, "sweep.snr_db"),
    ({"seed": True}, "seed"),
    ({"scenario": {"link": {"altitud": 1.0}}}, "scenario.link.altitud"),
])
def test_config_validation(tmp_path, capsys, doc, needle):
    cfg = write_cfg(tmp_path, doc)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert needle in capsys.readouterr().err


def test_bad_json_and_missing_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{nope")
    assert cli.main(["gen", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["gen", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["gen", "--out", str(blocker / "sub")]) == 2


def test_precedence_flag_over_file_over_default(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 5, "jobs": 2, "data": {"n": 50}})
    out = tmp_path / "o"
    assert cli.main(["gen", "--config", cfg, "--seed", "7", "--out", str(out)]) == 0
    m = manifest(out / "manifest-gen.json")
    assert m["seed"] == 7 and m["config"]["jobs"] == 2
    assert m["sources"]["seed"] == "flag"
    assert m["sources"]["jobs"] == "file"
    assert m["sources"]["data.k"] == "default"
    assert m["sources"]["out"] == "flag"
    assert m["config"]["fit"]["dagmm"]["lambda_tilde"] == 0.1


def test_fit_gmm_labels(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["fit", "--out", str(out), "--no-timestamp"]) == 0
    rows = (out / "fit-gmm" / "labels.csv").read_text().splitlines()
    labels = np.array([int(r.split(",")[1]) for r in rows[1:]])
    assert labels.min() >= 0 and labels.max() < 3 and labels.size == 3000
    m = manifest(out / "fit-gmm" / "manifest.json")
    assert m["derived"]["ari_vs_truth"] > 0.9


def test_fit_both_methods_share_lineage(tmp_path):
    out = tmp_path / "o"
    cli.main(["gen", "--out", str(out), "--config", write_cfg(tmp_path, SMALL_DAGMM)])
    cfg = write_cfg(tmp_path, SMALL_DAGMM)
    data = str(out / "dataset.csv")
    assert cli.main(["fit", "--config", cfg, "--method", "gmm", "--data", data, "--out", str(out)]) == 0
    assert cli.main(["fit", "--config", cfg, "--method", "dagmm", "--data", data, "--out", str(out)]) == 0
    g, d = manifest(out / "fit-gmm" / "manifest.json"), manifest(out / "fit-dagmm" / "manifest.json")
    assert g["lineage"] == d["lineage"]
    assert d["sources"]["fit.method"] == "flag"
    trace = (out / "fit-dagmm" / "trace.csv").read_text().splitlines()
    assert trace[0] == "iter,aug_lagrangian,recon,nll,violation"
    assert len(trace) - 1 == 5 + 1
    svg = (out / "fit-dagmm" / "clusters.svg").read_text()
    assert "first iteration" in svg and "final" in svg and "<script" not in svg


def test_fit_numerical_failure_keeps_partial_trace(tmp_path, monkeypatch):
    real = dagmm.update_network
    calls = {"n": 0}

    def flaky(state, X, steps=None, step=None):
        calls["n"] += 1
        if calls["n"] == 3:
            raise FloatingPointError("injected overflow")
        return real(state, X, steps, step)

    monkeypatch.setattr(dagmm, "update_network", flaky)
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, SMALL_DAGMM)
    assert cli.main(["fit", "--config", cfg, "--method", "dagmm", "--out", str(out)]) == 3
    trace = (out / "fit-dagmm" / "trace.csv").read_text().splitlines()
    assert len(trace) == 1 + 3  # header, init row, two completed iterations
    m = manifest(out / "fit-dagmm" / "manifest.json")
    assert m["exit_code"] == 3 and "injected overflow" in m["error"]
    assert "trace.csv" in m["outputs"]


def test_sweep_baseline_only(tmp_path):
    cfg = write_cfg(tmp_path, {"sweep": {"snr_db": [0, 5, 10, 15, 20], "methods": ["baseline"], "mc_samples": 20000}})
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "capacity.csv").read_text().splitlines()
    assert lines[0] == "snr_db,rate_baseline,stderr_baseline"
    assert len(lines) == 6
    svg = (out / "capacity.svg").read_text()
    assert "<polyline" in svg and "<!-- generated" in svg


def test_sweep_awgn_limit(tmp_path):
    grid = [0, 5, 10, 15, 20]
    cfg = write_cfg(tmp_path, {"scenario": {"lam": 1e-12, "t_coeff": 1.0, "sigma_cl": 1.0},
                               "sweep": {"snr_db": grid, "methods": ["baseline"]}})
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = [r.split(",") for r in (out / "capacity.csv").read_text().splitlines()[1:]]
    got = np.array([float(r[1]) for r in rows])
    np.testing.assert_allclose(got, 0.95 * awgn_rate(10 ** (np.array(grid) / 10)), atol=0.02)


def test_sweep_with_link_budget(tmp_path):
    cfg = write_cfg(tmp_path, {"scenario": {"link": {}}, "sweep": {"methods": ["baseline"], "mc_samples": 5000}})
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    d = manifest(out / "manifest-sweep.json")["derived"]
    assert d["link"]["tau_fs"] == pytest.approx(4.33721804572917e-6, rel=1e-9)
    assert d["t_coeff"] == pytest.approx(np.sqrt(0.606 * 4.33721804572917e-6), rel=1e-9)
    assert d["sigma_cl_eff"] == pytest.approx(np.sqrt(1.046), rel=1e-12)


def test_default_sweep_runtime(tmp_path):
    t = time.perf_counter()
    assert cli.main(["sweep", "--out", str(tmp_path / "o"), "--no-timestamp"]) == 0
    assert time.perf_counter() - t < 120


def test_gradcheck(tmp_path, capsys, monkeypatch):
    out = tmp_path / "o"
    assert cli.main(["gradcheck", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert sum("max relative error" in line for line in text.splitlines()) == 3
    real = autoencoder.grad_autoencoder

    def flipped(net, X):
        loss, g = real(net, X)
        for a in g.arrays():
            a *= -1.0
        return loss, g

    monkeypatch.setattr(autoencoder, "grad_autoencoder", flipped)
    assert cli.main(["gradcheck", "--out", str(out)]) == 4
    assert manifest(out / "manifest-gradcheck.json")["exit_code"] == 4


def test_report_verifies_digests(tmp_path):
    out = tmp_path / "o"
    cli.main(["gen", "--out", str(out), "--config", write_cfg(tmp_path, {"data": {"n": 100}})])
    cli.main(["gradcheck", "--out", str(out)])
    assert cli.main(["report", "--out", str(out)]) == 0
    text = (out / "report.md").read_text()
    assert "## gen" in text and "## gradcheck" in text
    with open(out / "dataset.csv", "a") as fh:
        fh.write("1,2,3,0\n")
    assert cli.main(["report", "--out", str(out)]) == 4
    assert cli.main(["report", "--out", str(tmp_path / "empty")]) == 2


def test_svg_timestamp_suppressed_and_identical(tmp_path):
    cfg = write_cfg(tmp_path, {"sweep": {"methods": ["baseline"], "mc_samples": 5000}})
    for name in ("a", "b"):
        assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / name), "--no-timestamp"]) == 0
    a = (tmp_path / "a" / "capacity.svg").read_bytes()
    assert a == (tmp_path / "b" / "capacity.svg").read_bytes()
    assert b"generated" not in a
