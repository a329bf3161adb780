"""Synthetic dataset generators: warped 3-D cluster clouds and layered
affine-mixture (deep GMM) forward sampling."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from hqnrate import csvio
from hqnrate.noise import HqnParams, sample_hqn
from hqnrate.seeding import rng_for

# Mild photon noise so the default 3-D benchmark stays clusterable.
CLUSTER_NOISE = HqnParams(lam=0.2, r_max=6, mu_cl=0.0, sigma_cl=0.3)


@dataclass
class LayerSpec:
    """Layered generator: ``layers[0]`` is the layer closest to the output.

    Each layer is a list of (transmission coefficient, probability) branches
    with its own hybrid-noise law; ``dim`` is the per-sample vector width.
    """

    layers: list
    noise: list
    dim: int = 3

    def __post_init__(self):
        if not self.layers:
            raise ValueError("depth must be >= 1")
        if len(self.noise) != len(self.layers):
            raise ValueError("one noise law per layer is required")
        for l, branches in enumerate(self.layers):
            probs = [p for _, p in branches]
            if not branches or any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
                raise ValueError(f"layer {l + 1}: branch probabilities must be >= 0 and sum to 1")

    @property
    def depth(self):
        return len(self.layers)

    @property
    def n_paths(self):
        return math.prod(len(b) for b in self.layers)


@dataclass
class Dataset:
    data: np.ndarray
    labels: np.ndarray | None = None
    descriptor: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or not np.all(np.isfinite(self.data)):
            raise ValueError("dataset must be a finite N x D matrix")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.data.shape[0],) or self.labels.min(initial=0) < 0:
                raise ValueError("labels must be one nonnegative integer per row")


def path_label(choices, spec: LayerSpec) -> np.ndarray:
    """Mixed-radix path index, layer 1 most significant."""
    label = np.zeros(choices.shape[0], dtype=np.int64)
    for l, branches in enumerate(spec.layers):
        label = label * len(branches) + choices[:, l]
    return label


def dgmm_sample(spec: LayerSpec, n: int, seed) -> Dataset:
    """Forward-sample the layered model: x^(h) ~ N(0, I), then for l = h..1
    pick branch s with probability pi_s and set x^(l-1) = T_s x^(l) + z^(l).

    Branch choices are independent across layers; noise is drawn per coordinate.
    """
    rng = rng_for(seed, 0)
    x = rng.standard_normal((n, spec.dim))
    choices = np.zeros((n, spec.depth), dtype=np.int64)
    for l in range(spec.depth - 1, -1, -1):
        branches = spec.layers[l]
        t = np.array([b[0] for b in branches], dtype=np.float64)
        p = np.array([b[1] for b in branches], dtype=np.float64)
        s = rng.choice(len(branches), size=n, p=p / p.sum())
        choices[:, l] = s
        z = sample_hqn(spec.noise[l], n * spec.dim, [*_key(seed), 1, l]).reshape(n, spec.dim)
        x = t[s, None] * x + z
    desc = {"generator": "dgmm", "depth": spec.depth, "dim": spec.dim,
            "layers": [[list(b) for b in br] for br in spec.layers],
            "noise": [vars(p) for p in spec.noise]}
    return Dataset(x, path_label(choices, spec), desc, seed)


def _key(seed):
    return list(seed) if isinstance(seed, (list, tuple)) else [seed]


def cluster_centres(k, radius, rng, min_sep=None):
    """Random points on a sphere with pairwise separation >= ``min_sep``
    (default: the radius), by rejection."""
    min_sep = radius if min_sep is None else min_sep
    for _ in range(10_000):
        v = rng.standard_normal((k, 3))
        c = radius * v / np.linalg.norm(v, axis=1, keepdims=True)
        d = np.linalg.norm(c[:, None] - c[None], axis=2) + np.eye(k) * 1e9
        if d.min() >= min_sep:
            return c
    raise ValueError(f"could not place {k} centres {min_sep} apart on radius {radius}")


def gen_cluster3d(k=3, n=3000, warp=0.5, params: HqnParams = CLUSTER_NOISE, seed=0,
                  radius=5.0, cluster_std=0.5) -> Dataset:
    """``k`` Gaussian clusters in R^3 pushed through v + warp * sin(v), then
    perturbed by hybrid noise on every coordinate."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = rng_for(seed, 0)
    centres = cluster_centres(k, radius, rng) if k > 1 else cluster_centres(1, radius, rng, 0.0)
    labels = rng.integers(0, k, size=n)
    v = centres[labels] + cluster_std * rng.standard_normal((n, 3))
    v = v + warp * np.sin(v)
    v = v + sample_hqn(params, n * 3, [*_key(seed), 1]).reshape(n, 3)
    desc = {"generator": "cluster3d", "k": k, "n": n, "warp": warp, "radius": radius,
            "cluster_std": cluster_std, "noise": vars(params)}
    return Dataset(v, labels, desc, seed)


def save_dataset(ds: Dataset, path):
    comment = json.dumps({**ds.descriptor, "seed": ds.seed}, sort_keys=True)
    csvio.write_matrix(path, ds.data, ds.labels, comment)


def load_dataset(path) -> Dataset:
    X, labels, comment = csvio.read_matrix(path)
    desc = {}
    seed = None
    if comment:
        try:
            desc = json.loads(comment)
            seed = desc.pop("seed", None)
        except json.JSONDecodeError:
            desc = {"comment": comment}
    return Dataset(X, labels, desc, seed)
