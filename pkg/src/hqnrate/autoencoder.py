"""Multilayer encoder/decoder networks with hand-written backpropagation."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from hqnrate.seeding import rng_for

ACTIVATIONS = ("tanh", "identity")


@dataclass
class MlpParams:
    """Fully connected net; hidden layers use ``activation``, the output layer is linear.

    ``weights[l]`` has shape (layer_sizes[l+1], layer_sizes[l]).
    """

    layer_sizes: list
    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        sizes = [int(s) for s in self.layer_sizes]
        if len(sizes) < 2 or len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer_sizes, weights and biases are inconsistent")
        self.layer_sizes = sizes
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l}: bad shapes {w.shape}, {b.shape}")

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    def copy(self):
        return MlpParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def arrays(self):
        """Parameter arrays in a fixed order (w0, b0, w1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def to_dict(self):
        return {
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["layer_sizes"], doc["weights"], doc["biases"], doc.get("activation", "tanh"))


@dataclass
class AeParams:
    encoder: MlpParams
    decoder: MlpParams

    def __post_init__(self):
        if self.encoder.n_out != self.decoder.n_in:
            raise ValueError("encoder output size must equal decoder input size")

    @property
    def latent_dim(self):
        return self.encoder.n_out

    def copy(self):
        return AeParams(self.encoder.copy(), self.decoder.copy())

    def arrays(self):
        return self.encoder.arrays() + self.decoder.arrays()

    def to_dict(self):
        return {"encoder": self.encoder.to_dict(), "decoder": self.decoder.to_dict()}

    @classmethod
    def from_dict(cls, doc):
        return cls(MlpParams.from_dict(doc["encoder"]), MlpParams.from_dict(doc["decoder"]))


def init_mlp(layer_sizes, rng, activation="tanh") -> MlpParams:
    """Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(list(layer_sizes), weights, biases, activation)


def split_architecture(layer_sizes):
    """[3, 8, 2, 8, 3] -> encoder [3, 8, 2], decoder [2, 8, 3] (split at the middle layer)."""
    sizes = list(layer_sizes)
    if len(sizes) < 3 or len(sizes) % 2 == 0:
        raise ValueError("autoencoder architecture needs an odd number (>= 3) of layer sizes")
    mid = len(sizes) // 2
    return sizes[: mid + 1], sizes[mid:]


def init_autoencoder(layer_sizes, seed, activation="tanh") -> AeParams:
    enc_sizes, dec_sizes = split_architecture(layer_sizes)
    rng = rng_for(seed)
    return AeParams(init_mlp(enc_sizes, rng, activation), init_mlp(dec_sizes, rng, activation))


def _as_batch(x, width):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.ndim != 2 or X.shape[1] != width:
        raise ValueError(f"expected inputs of width {width}, got shape {x.shape}")
    return X, single


def forward(mlp: MlpParams, X):
    """Forward pass over a batch; returns (output, cache of layer outputs)."""
    h = X
    cache = [h]
    last = len(mlp.weights) - 1
    for l, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        a = h @ w.T + b
        h = a if (l == last or mlp.activation == "identity") else np.tanh(a)
        cache.append(h)
    return h, cache


def backward(mlp: MlpParams, cache, d_out):
    """Reverse pass; returns (MlpParams of gradients, gradient w.r.t. the input batch)."""
    last = len(mlp.weights) - 1
    grads_w = [None] * len(mlp.weights)
    grads_b = [None] * len(mlp.weights)
    delta = d_out
    for l in range(last, -1, -1):
        if l != last and mlp.activation == "tanh":
            delta = delta * (1.0 - cache[l + 1] ** 2)
        grads_w[l] = delta.T @ cache[l]
        grads_b[l] = delta.sum(axis=0)
        delta = delta @ mlp.weights[l]
    return MlpParams(list(mlp.layer_sizes), grads_w, grads_b, mlp.activation), delta


def apply_mlp(mlp: MlpParams, x):
    X, single = _as_batch(x, mlp.n_in)
    y, _ = forward(mlp, X)
    return y[0] if single else y


def encode(enc: MlpParams, x):
    return apply_mlp(enc, x)


def decode(dec: MlpParams, x_hat):
    return apply_mlp(dec, x_hat)


def reconstruct(ae: AeParams, x):
    return decode(ae.decoder, encode(ae.encoder, x))


def mse_loss(x_batch, y_batch) -> float:
    """Mean squared error averaged over samples and coordinates."""
    x = np.asarray(x_batch, dtype=np.float64)
    y = np.asarray(y_batch, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ValueError("empty batch")
    return float(np.mean((x - y) ** 2))


def grad_autoencoder(ae: AeParams, x_batch):
    """Return (loss, AeParams of gradients) of ``mse_loss(x, decode(encode(x)))``."""
    X, _ = _as_batch(x_batch, ae.encoder.n_in)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    z, enc_cache = forward(ae.encoder, X)
    y, dec_cache = forward(ae.decoder, z)
    diff = y - X
    loss = float(np.mean(diff**2))
    d_y = 2.0 * diff / diff.size
    g_dec, d_z = backward(ae.decoder, dec_cache, d_y)
    g_enc, _ = backward(ae.encoder, enc_cache, d_z)
    return loss, AeParams(g_enc, g_dec)


def sgd_update(params, grads, step):
    """In-place ``p -= step * g`` over matching parameter lists."""
    for p, g in zip(params.arrays(), grads.arrays()):
        p -= step * g


class TrainingDiverged(FloatingPointError):
    """Loss became non-finite; carries the last finite parameters and the trace so far."""

    def __init__(self, message, params, trace):
        super().__init__(message)
        self.params = params
        self.trace = trace


def train_autoencoder(ae: AeParams, data, epochs=50, batch=64, step=0.05, seed=0):
    """Mini-batch gradient descent on the reconstruction MSE.

    Returns (trained AeParams, loss trace) where ``trace[0]`` is the loss
    before training and ``trace[e]`` the full-data loss after epoch ``e``.
    """
    X, _ = _as_batch(data, ae.encoder.n_in)
    if X.shape[0] == 0:
        raise ValueError("cannot train on empty data")
    ae = ae.copy()
    rng = rng_for(seed)
    trace = [mse_loss(X, reconstruct(ae, X))]
    n = X.shape[0]
    for epoch in range(epochs):
        last_good = ae.copy()
        perm = rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is detected below
            for start in range(0, n, batch):
                _, grads = grad_autoencoder(ae, X[perm[start:start + batch]])
                sgd_update(ae, grads, step)
            loss = mse_loss(X, reconstruct(ae, X))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at epoch {epoch + 1}", last_good, trace)
        trace.append(loss)
    return ae, trace


def flatten(params) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def unflatten_into(params, vec):
    """Copy ``vec`` into the arrays of ``params`` (in place) and return ``params``."""
    pos = 0
    for a in params.arrays():
        a[...] = vec[pos:pos + a.size].reshape(a.shape)
        pos += a.size
    return params


def finite_difference_grad(fn, params, eps=1e-5) -> np.ndarray:
    """Central differences of scalar ``fn(params)`` w.r.t. every parameter entry."""
    work = params.copy()
    base = flatten(work)
    out = np.empty_like(base)
    for j in range(base.size):
        v = base.copy()
        v[j] += eps
        hi = fn(unflatten_into(work, v))
        v[j] -= 2 * eps
        lo = fn(unflatten_into(work, v))
        out[j] = (hi - lo) / (2 * eps)
    unflatten_into(work, base)
    return out


def max_relative_error(analytic, numeric, tiny=1e-7) -> float:
    """max |a - n| / max(|a|, |n|, tiny) over entries."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), tiny)
    return float(np.max(np.abs(analytic - numeric) / denom))


GRADCHECK_ARCHITECTURES = ([3, 8, 2, 8, 3], [1, 4, 1, 4, 1], [3, 16, 8, 2, 8, 16, 3])


def gradient_check(layer_sizes, seed=0, n=8, eps=1e-5, grad_fn=None) -> float:
    """Max relative error between backprop and central differences for one architecture."""
    grad_fn = grad_fn or grad_autoencoder
    rng = rng_for([seed, len(layer_sizes)])
    ae = init_autoencoder(layer_sizes, seed=[seed, 1])
    X = rng.standard_normal((n, layer_sizes[0]))
    _, grads = grad_fn(ae, X)
    numeric = finite_difference_grad(lambda p: mse_loss(X, reconstruct(p, X)), ae, eps)
    return max_relative_error(flatten(grads), numeric)


def save_ae(path, ae: AeParams):
    with open(path, "w") as fh:
        json.dump(ae.to_dict(), fh)
        fh.write("\n")


def load_ae(path) -> AeParams:
    with open(path) as fh:
        return AeParams.from_dict(json.load(fh))
