"""Command-line entry point: ``hqnrate gen | fit | sweep | gradcheck | report``.

Configuration is a JSON file validated against a fixed schema; flags
override file values, which override built-in defaults. Every run writes
a manifest (resolved config, where each value came from, derived
quantities, timings and output digests), including failed runs.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 self-check failure.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import datetime as _dt
import glob
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from hqnrate import __version__, autoencoder, capacity, dagmm, datagen, gmm, svgplot
from hqnrate.metrics import adjusted_rand_index
from hqnrate.kernels import BACKEND
from hqnrate.linkbudget import LinkBudget, effective_channel
from hqnrate.noise import ChannelConfig, HqnParams, mixture_moments, hqn_gmm_1d

log = logging.getLogger("hqnrate")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_SELFCHECK = 0, 2, 3, 4
GRADCHECK_LIMIT = 1e-4
NUMERICAL_ERRORS = (FloatingPointError, np.linalg.LinAlgError, ArithmeticError)


class ConfigError(ValueError):
    pass


class SelfCheckError(RuntimeError):
    pass


# --- schema ---------------------------------------------------------------
# Leaves are (kind, default). Sections are dicts. ("section?", schema) is a
# section that may be null.

def _hyper_schema():
    skip = {"seed", "r_count"}
    out = {}
    for f in dataclasses.fields(dagmm.DagmmHyper):
        if f.name in skip:
            continue
        out[f.name] = ("int" if isinstance(f.default, int) else "float", f.default)
    return out


LINK_SCHEMA = {
    f.name: ("float", f.default) for f in dataclasses.fields(LinkBudget)
}

SCHEMA = {
    "seed": ("int", 0),
    "out": ("str", "hqnrate-out"),
    "jobs": ("int", 1),
    "scenario": {
        "lam": ("float", 3.0),
        "r_max": ("int", 6),
        "mu_cl": ("float", 0.0),
        "sigma_cl": ("float", 1.0),
        "t_coeff": ("float", 0.7785),
        "mu_x": ("float", 0.0),
        "sigma_x": ("float", 2.0),
        "warp": ("float", 0.0),
        "beta_rec": ("float", 0.95),
        "link": ("section?", LINK_SCHEMA),
    },
    "data": {
        "path": ("str?", None),
        "k": ("int", 3),
        "n": ("int", 3000),
        "warp": ("float", 0.5),
        "radius": ("float", 5.0),
        "cluster_std": ("float", 0.5),
        "lam": ("float", datagen.CLUSTER_NOISE.lam),
        "r_max": ("int", datagen.CLUSTER_NOISE.r_max),
        "mu_cl": ("float", datagen.CLUSTER_NOISE.mu_cl),
        "sigma_cl": ("float", datagen.CLUSTER_NOISE.sigma_cl),
    },
    "fit": {
        "method": ("str", "gmm"),
        "r_count": ("int", 3),
        "em_max_iters": ("int", 300),
        "em_tol": ("float", 1e-6),
        "arch": ("ints", [3, 16, 8, 2, 8, 16, 3]),
        "dagmm": _hyper_schema(),
    },
    "sweep": {
        "snr_db": ("floats", [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]),
        "methods": ("strs", list(capacity.METHODS)),
        "mc_samples": ("int", 100_000),
        "r_count": ("int", 7),
        "n_train": ("int", 2000),
        "n_holdout": ("int", 20000),
        "em_max_iters": ("int", 300),
        "em_tol": ("float", 1e-6),
        "arch": ("ints", [1, 4, 1, 4, 1]),
        "dagmm": _hyper_schema(),
    },
}


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_leaf(kind, value, path):
    if kind.endswith("?"):
        if value is None:
            return None
        kind = kind[:-1]
    ok = {
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "float": _is_num,
        "str": lambda v: isinstance(v, str),
        "bool": lambda v: isinstance(v, bool),
        "ints": lambda v: isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
        "floats": lambda v: isinstance(v, list) and all(_is_num(x) for x in v),
        "strs": lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
    }[kind]
    if not ok(value):
        raise ConfigError(f"{path}: expected {kind}, got {json.dumps(value)}")
    if kind == "float":
        value = float(value)
        if not np.isfinite(value):
            raise ConfigError(f"{path}: must be finite")
    elif kind == "floats":
        value = [float(x) for x in value]
    return value


def defaults(schema=SCHEMA):
    out = {}
    for key, spec in schema.items():
        if isinstance(spec, dict):
            out[key] = defaults(spec)
        else:
            out[key] = copy.deepcopy(spec[1]) if spec[0] != "section?" else None
    return out


def resolve(doc, schema=SCHEMA, prefix=""):
    """Validate ``doc`` against ``schema``; returns (resolved, sources)."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key '{prefix}{unknown[0]}'")
    resolved, sources = {}, {}
    for key, spec in schema.items():
        path = prefix + key
        if isinstance(spec, dict):
            sub, src = resolve(doc.get(key, {}), spec, path + ".")
        elif spec[0] == "section?":
            value = doc.get(key)
            if value is None:
                resolved[key] = None
                sources[path] = "file" if key in doc else "default"
                continue
            sub, src = resolve(value, spec[1], path + ".")
        else:
            if key in doc:
                resolved[key] = _check_leaf(spec[0], doc[key], path)
                sources[path] = "file"
            else:
                resolved[key] = copy.deepcopy(spec[1])
                sources[path] = "default"
            continue
        resolved[key] = sub
        sources.update(src)
    return resolved, sources


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


# --- object construction ----------------------------------------------------

def _wrap(section, fn):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def build_scenario(cfg):
    """Scenario plus derived quantities; a link section overrides t_coeff and sigma_cl."""
    sc = cfg["scenario"]
    base = _wrap("scenario", lambda: HqnParams(sc["lam"], sc["r_max"], sc["mu_cl"], sc["sigma_cl"]))
    derived = {}
    if sc["link"] is not None:
        link = _wrap("scenario.link", lambda: LinkBudget(**sc["link"]))
        channel, noise, prov = _wrap(
            "scenario.link", lambda: effective_channel(link, base, sc["mu_x"], sc["sigma_x"])
        )
        derived["link"] = prov
    else:
        channel = _wrap("scenario", lambda: ChannelConfig(sc["t_coeff"], sc["mu_x"], sc["sigma_x"]))
        noise = base
    if not 0 < sc["beta_rec"] <= 1:
        raise ConfigError("scenario.beta_rec: must lie in (0, 1]")
    if not 0 <= sc["warp"] < 1:
        raise ConfigError("scenario.warp: must lie in [0, 1)")
    scenario = capacity.Scenario(noise, channel, sc["beta_rec"], sc["warp"])
    derived.update({
        "t_coeff": channel.t_coeff,
        "transmissivity": channel.transmissivity,
        "sigma_cl_eff": noise.sigma_cl,
        "truncated_mass": noise.truncated_mass,
        "noise_variance": scenario.noise_variance(),
        "noise_variance_unwarped": float(mixture_moments(hqn_gmm_1d(noise))[1][0, 0]),
    })
    return scenario, derived


def _check_arch(arch, dim, path):
    try:
        autoencoder.split_architecture(arch)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if min(arch) < 1:
        raise ConfigError(f"{path}: layer sizes must be >= 1")
    if arch[0] != dim or arch[-1] != dim:
        raise ConfigError(f"{path}: input and output sizes must equal the data dimension {dim}")


def _hyper(section, r_count, seed, path):
    return _wrap(path, lambda: dagmm.DagmmHyper(**section, r_count=r_count, seed=seed))


def build_fit_options(cfg):
    sw = cfg["sweep"]
    _check_arch(sw["arch"], 1, "sweep.arch")
    unknown = sorted(set(sw["methods"]) - set(capacity.METHODS))
    if unknown or not sw["methods"]:
        raise ConfigError(f"sweep.methods: expected a nonempty subset of {list(capacity.METHODS)}")
    grid = np.asarray(sw["snr_db"])
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ConfigError("sweep.snr_db: must be nonempty and strictly increasing")
    for key in ("mc_samples", "n_train", "n_holdout", "r_count"):
        if sw[key] < 2:
            raise ConfigError(f"sweep.{key}: must be >= 2")
    return capacity.FitOptions(
        r_count=sw["r_count"], n_train=sw["n_train"], n_holdout=sw["n_holdout"],
        em_max_iters=sw["em_max_iters"], em_tol=sw["em_tol"], arch=tuple(sw["arch"]),
        dagmm=_hyper(sw["dagmm"], sw["r_count"], cfg["seed"], "sweep.dagmm"),
    )


def generate_dataset(cfg):
    d = cfg["data"]
    params = _wrap("data", lambda: HqnParams(d["lam"], d["r_max"], d["mu_cl"], d["sigma_cl"]))
    if d["k"] < 1 or d["n"] < 1:
        raise ConfigError("data: k and n must be >= 1")
    return datagen.gen_cluster3d(d["k"], d["n"], d["warp"], params, cfg["seed"], d["radius"], d["cluster_std"])


# --- run bookkeeping ----------------------------------------------------------

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


class Run:
    """Collects outputs, timings and derived values; writes the manifest."""

    def __init__(self, command, argv, out_dir, manifest_name, timestamp):
        self.command = command
        self.argv = list(argv)
        self.out_dir = out_dir
        self.manifest_name = manifest_name
        self.timestamp = timestamp
        self.config = None
        self.sources = {}
        self.derived = {}
        self.lineage = {}
        self.failures = []
        self.outputs = []
        self.timings = {}
        self.started = time.perf_counter()
        self.started_at = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def add_output(self, path):
        self.outputs.append(path)

    def timed(self, label):
        run = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[label] = round(time.perf_counter() - self.t, 6)

        return _T()

    def write_manifest(self, exit_code, error=None):
        self.timings["total"] = round(time.perf_counter() - self.started, 6)
        digests = {}
        for p in self.outputs:
            if os.path.exists(p):
                digests[os.path.relpath(p, self.out_dir)] = sha256_file(p)
        doc = {
            "tool": "hqnrate",
            "version": __version__,
            "backend": BACKEND,
            "command": self.command,
            "argv": self.argv,
            "status": "ok" if exit_code == EXIT_OK else "failed",
            "exit_code": exit_code,
            "error": error,
            "seed": None if self.config is None else self.config["seed"],
            "config": self.config,
            "sources": self.sources,
            "derived": self.derived,
            "lineage": self.lineage,
            "failures": self.failures,
            "timings_s": self.timings,
            "outputs": digests,
        }
        if self.timestamp:
            doc["started_at"] = self.started_at
        os.makedirs(self.out_dir, exist_ok=True)
        with open(self.path(self.manifest_name), "w", newline="\n") as fh:
            json.dump(_jsonable(doc), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    return format(float(v), ".17g")


def write_rows(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


# --- commands -----------------------------------------------------------------

def cmd_gen(run: Run, cfg, args):
    if cfg["data"]["path"] is not None:
        raise ConfigError("data.path: gen writes a dataset; path must be null")
    with run.timed("generate"):
        ds = generate_dataset(cfg)
    out = run.path("dataset.csv")
    with run.timed("write"):
        datagen.save_dataset(ds, out)
    run.add_output(out)
    run.derived["n_rows"] = int(ds.data.shape[0])
    run.derived["descriptor"] = ds.descriptor
    print(f"wrote {out} ({ds.data.shape[0]} rows)")
    return EXIT_OK


def _load_fit_data(run, cfg, args):
    path = args.data or cfg["data"]["path"]
    if path is not None:
        if args.data:
            run.sources["data.path"] = "flag"
        try:
            ds = datagen.load_dataset(path)
        except OSError as exc:
            raise ConfigError(f"cannot read dataset {path}: {exc.strerror}") from None
        except ValueError as exc:
            raise ConfigError(f"dataset {path}: {exc}") from None
        run.lineage["data"] = {"path": os.path.abspath(path), "sha256": sha256_file(path)}
    else:
        ds = generate_dataset(cfg)
        run.lineage["data"] = {"generated": ds.descriptor, "seed": cfg["seed"]}
    return ds


def cmd_fit(run: Run, cfg, args):
    f = cfg["fit"]
    method = f["method"]
    if method not in ("gmm", "dagmm"):
        raise ConfigError(f"fit.method: expected 'gmm' or 'dagmm', got {method!r}")
    if f["r_count"] < 1:
        raise ConfigError("fit.r_count: must be >= 1")
    with run.timed("load_data"):
        ds = _load_fit_data(run, cfg, args)
    X = ds.data
    if method == "dagmm":
        _check_arch(f["arch"], X.shape[1], "fit.arch")
    if X.shape[0] <= f["r_count"]:
        raise ConfigError(f"fit.r_count: need more samples ({X.shape[0]}) than components")
    run.lineage["seed"] = cfg["seed"]
    os.makedirs(run.out_dir, exist_ok=True)
    stamp = run.timestamp

    if method == "gmm":
        with run.timed("fit"):
            model, trace = gmm.fit_em(X, f["r_count"], f["em_max_iters"], f["em_tol"], seed=cfg["seed"])
        write_rows(run.path("trace.csv"), ["iter", "loglik"], enumerate(trace.loglik))
        run.add_output(run.path("trace.csv"))
        gmm.save_model(run.path("model.json"), model, gmm.default_floor(X), trace)
        run.add_output(run.path("model.json"))
        labels = np.argmax(model.component_log_prob(X), axis=1)
        write_rows(run.path("labels.csv"), ["index", "label"], enumerate(labels))
        rows, titles = [labels], ["EM"]
        run.derived.update(n_iter=trace.n_iter, converged=trace.converged, final_loglik=trace.loglik[-1])
    else:
        hyper = _hyper(f["dagmm"], f["r_count"], cfg["seed"], "fit.dagmm")
        try:
            with run.timed("fit"):
                state, report = dagmm.fit_dagmm(X, f["arch"], hyper)
        except dagmm.DagmmError as exc:
            if exc.report is not None:
                _write_dagmm_trace(run, exc.report)
            raise
        _write_dagmm_trace(run, report)
        dagmm.save_state(run.path("model.json"), state)
        run.add_output(run.path("model.json"))
        labels = report.labels
        write_rows(run.path("labels.csv"), ["index", "label_first", "label"],
                   zip(range(labels.size), report.labels_first, labels))
        rows, titles = [report.labels_first, labels], ["first iteration", "final"]
        v = report.violation
        run.derived.update(
            outer_iters_run=len(v) - 1,
            stopped_early=report.stopped_early,
            violation_first=v[1] if len(v) > 1 else None,
            violation_final=v[-1],
            latent_floor=state.floor,
        )
    run.add_output(run.path("labels.csv"))
    if ds.labels is not None:
        run.derived["ari_vs_truth"] = adjusted_rand_index(ds.labels, labels)
    svg = svgplot.scatter_panels(X, rows, titles, title=f"{method} cluster assignment", timestamp=stamp)
    svgplot.write_svg(run.path("clusters.svg"), svg)
    run.add_output(run.path("clusters.svg"))
    print(f"{method}: {len(np.unique(labels))} clusters used; outputs in {run.out_dir}")
    return EXIT_OK


def _write_dagmm_trace(run, report):
    rows = [(i, a, r, n, v) for i, a, r, n, v in report.rows()]
    write_rows(run.path("trace.csv"), ["iter", "aug_lagrangian", "recon", "nll", "violation"], rows)
    run.add_output(run.path("trace.csv"))


def cmd_sweep(run: Run, cfg, args):
    scenario, derived = build_scenario(cfg)
    run.derived.update(derived)
    opts = build_fit_options(cfg)
    sw = cfg["sweep"]
    grid = np.asarray(sw["snr_db"])
    os.makedirs(run.out_dir, exist_ok=True)
    with run.timed("sweep"):
        curve = capacity.snr_sweep(scenario, grid, sw["methods"], sw["mc_samples"], cfg["seed"], opts, cfg["jobs"])
    t = scenario.channel.t_coeff
    run.derived["sigma_x_per_point"] = [
        float(np.sqrt(10 ** (s / 10) * derived["noise_variance"]) / t) for s in grid
    ]
    run.derived["held_out_cross_entropy_nats"] = curve.cross_entropy
    run.failures = [{"method": m, "snr_db": s, "error": e} for m, s, e in curve.failures]
    curve.write_csv(run.path("capacity.csv"))
    run.add_output(run.path("capacity.csv"))
    svg = svgplot.line_chart(grid, {m: curve.rate_bits[m] for m in curve.methods}, "SNR (dB)",
                             "achievable rate (bits/use)", "achievable rate versus SNR", run.timestamp)
    svgplot.write_svg(run.path("capacity.svg"), svg)
    run.add_output(run.path("capacity.svg"))
    for m in curve.methods:
        print(m, " ".join("nan" if not np.isfinite(v) else f"{v:.4f}" for v in curve.rate_bits[m]))
    dead = [m for m in curve.methods if not np.any(np.isfinite(curve.rate_bits[m]))]
    if dead:
        print(f"no successful grid point for: {', '.join(dead)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_gradcheck(run: Run, cfg, args):
    rows = []
    worst = 0.0
    with run.timed("gradcheck"):
        for arch in autoencoder.GRADCHECK_ARCHITECTURES:
            err = autoencoder.gradient_check(arch, seed=cfg["seed"])
            rows.append((json.dumps(arch).replace(",", ""), err))
            worst = max(worst, err) if np.isfinite(err) else np.inf
            print(f"{str(arch):<28} max relative error {err:.3e}")
    os.makedirs(run.out_dir, exist_ok=True)
    write_rows(run.path("gradcheck.csv"), ["architecture", "max_relative_error"], rows)
    run.add_output(run.path("gradcheck.csv"))
    run.derived["max_relative_error"] = {a: e for a, e in rows}
    run.derived["limit"] = GRADCHECK_LIMIT
    if not worst < GRADCHECK_LIMIT:
        raise SelfCheckError(f"gradient check failed: max relative error {worst:.3e} >= {GRADCHECK_LIMIT:g}")
    print("gradient check passed")
    return EXIT_OK


def cmd_report(run: Run, cfg, args):
    """Verify the digests in every manifest under --out and summarize the runs."""
    pattern = [os.path.join(run.out_dir, "manifest-*.json"), os.path.join(run.out_dir, "*", "manifest.json")]
    found = sorted(p for pat in pattern for p in glob.glob(pat) if not p.endswith("manifest-report.json"))
    if not found:
        raise ConfigError(f"no manifests found under {run.out_dir}")
    lines = ["# hqnrate run report", ""]
    bad = []
    for mpath in found:
        with open(mpath) as fh:
            doc = json.load(fh)
        base = os.path.dirname(mpath)
        rel = os.path.relpath(mpath, run.out_dir)
        lines.append(f"## {doc.get('command')} ({rel})")
        lines.append("")
        lines.append(f"- status: {doc.get('status')} (exit {doc.get('exit_code')}), seed {doc.get('seed')}")
        if doc.get("error"):
            lines.append(f"- error: {doc['error']}")
        for name, digest in sorted(doc.get("outputs", {}).items()):
            p = os.path.join(base, name)
            ok = os.path.exists(p) and sha256_file(p) == digest
            if not ok:
                bad.append(os.path.relpath(p, run.out_dir))
            lines.append(f"- {name}: {'ok' if ok else 'MISMATCH'}")
        derived = doc.get("derived", {})
        for key in ("t_coeff", "noise_variance", "ari_vs_truth", "violation_first", "violation_final",
                    "final_loglik", "max_relative_error", "held_out_cross_entropy_nats"):
            if key in derived:
                lines.append(f"- {key}: {json.dumps(derived[key])}")
        if doc.get("command") == "sweep" and os.path.exists(os.path.join(base, "capacity.csv")):
            with open(os.path.join(base, "capacity.csv")) as fh:
                table = [row.rstrip("\n").split(",") for row in fh]
            lines.append("")
            lines.append("| " + " | ".join(table[0]) + " |")
            lines.append("|" + "---|" * len(table[0]))
            lines.extend("| " + " | ".join(r) + " |" for r in table[1:])
        lines.append("")
    out = run.path("report.md")
    with open(out, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
    run.add_output(out)
    run.derived["manifests"] = [os.path.relpath(p, run.out_dir) for p in found]
    run.derived["digest_mismatches"] = bad
    print(f"wrote {out}: {len(found)} manifests, {len(bad)} digest mismatches")
    if bad:
        raise SelfCheckError(f"output digests do not match: {', '.join(bad)}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--jobs", type=int, help="worker threads for independent jobs")
    common.add_argument("--no-timestamp", action="store_true", help="omit timestamps from SVG and manifest")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="hqnrate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hqnrate {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate a clustered 3-D dataset")
    fp = sub.add_parser("fit", parents=[common], help="fit EM or DAGMM clustering to a dataset")
    fp.add_argument("--method", choices=("gmm", "dagmm"), help="overrides fit.method")
    fp.add_argument("--data", metavar="PATH", help="dataset CSV (default: generate from the data section)")
    sub.add_parser("sweep", parents=[common], help="achievable rate versus SNR")
    sub.add_parser("gradcheck", parents=[common], help="backprop versus finite differences")
    sub.add_parser("report", parents=[common], help="verify and summarize runs under --out")
    return p


def _apply_flags(cfg, sources, args):
    for key in ("seed", "out", "jobs"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
            sources[key] = "flag"
    if getattr(args, "method", None):
        cfg["fit"]["method"] = args.method
        sources["fit.method"] = "flag"
    if cfg["seed"] < 0 or cfg["seed"] >= 2**64:
        raise ConfigError("seed: must lie in [0, 2^64)")
    if cfg["jobs"] < 1:
        raise ConfigError("jobs: must be >= 1")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = args.out or SCHEMA["out"][1]
    cfg = None
    try:
        doc = load_config(args.config)
        if isinstance(doc, dict) and isinstance(doc.get("out"), str) and not args.out:
            out_dir = doc["out"]
        cfg, sources = resolve(doc)
        _apply_flags(cfg, sources, args)
        out_dir = cfg["out"]
    except ConfigError as exc:
        sources = {}
        err = exc
    else:
        err = None

    if args.command == "fit" and cfg is not None:
        out_dir = os.path.join(out_dir, f"fit-{cfg['fit']['method']}")
    manifest = "manifest.json" if args.command == "fit" else f"manifest-{args.command}.json"
    run = Run(args.command, argv, out_dir, manifest, not args.no_timestamp)
    run.config, run.sources = cfg, sources

    code, message = EXIT_OK, None
    if err is not None:
        code, message = EXIT_CONFIG, str(err)
    else:
        try:
            os.makedirs(out_dir, exist_ok=True)
            code = COMMANDS[args.command](run, cfg, args)
        except ConfigError as exc:
            code, message = EXIT_CONFIG, str(exc)
        except SelfCheckError as exc:
            code, message = EXIT_SELFCHECK, str(exc)
        except (dagmm.DagmmError, autoencoder.TrainingDiverged) as exc:
            code, message = EXIT_NUMERICAL, f"numerical failure: {exc}"
        except NUMERICAL_ERRORS as exc:
            code, message = EXIT_NUMERICAL, f"numerical failure: {exc}"
        except OSError as exc:
            code, message = EXIT_CONFIG, f"cannot write output: {exc}"
    if message:
        print(f"hqnrate {args.command}: {message}", file=sys.stderr)
    try:
        run.write_manifest(code, message)
    except OSError as exc:
        print(f"hqnrate: cannot write manifest in {out_dir}: {exc}", file=sys.stderr)
        code = code or EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
