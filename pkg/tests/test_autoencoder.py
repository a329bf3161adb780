import numpy as np
import pytest

from hqnrate import autoencoder as ae
from hqnrate.datagen import CLUSTER_NOISE, LayerSpec, dgmm_sample, gen_cluster3d


def identity_mlp(d):
    return ae.MlpParams([d, d], [np.eye(d)], [np.zeros(d)], "identity")


def test_encode_identity_and_zero_weights():
    x = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(ae.encode(identity_mlp(3), x), x)
    np.testing.assert_array_equal(ae.decode(identity_mlp(3), x), x)
    z = ae.MlpParams([3, 4, 2], [np.zeros((4, 3)), np.zeros((2, 4))], [np.ones(4), np.array([0.5, -2.0])])
    np.testing.assert_array_equal(ae.encode(z, x), [0.5, -2.0])
    np.testing.assert_array_equal(ae.decode(z, x), [0.5, -2.0])


def test_encode_matches_matrix_oracle(rng):
    net = ae.init_mlp([3, 5, 2], rng)
    net.biases = [rng.normal(size=5), rng.normal(size=2)]
    X = rng.normal(size=(5, 3))
    out = ae.encode(net, X)
    for i in range(5):
        h = np.tanh(net.weights[0] @ X[i] + net.biases[0])
        np.testing.assert_allclose(out[i], net.weights[1] @ h + net.biases[1], rtol=0, atol=1e-12)
    dec = ae.init_mlp([2, 5, 3], rng)
    y = ae.decode(dec, out)
    for i in range(5):
        h = np.tanh(dec.weights[0] @ out[i] + dec.biases[0])
        np.testing.assert_allclose(y[i], dec.weights[1] @ h + dec.biases[1], rtol=0, atol=1e-12)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        ae.encode(identity_mlp(3), np.zeros(2))


def test_mse_loss_conventions(rng):
    x = rng.normal(size=(7, 3))
    assert ae.mse_loss(x, x) == 0.0
    assert ae.mse_loss([[1.0, 0.0]], [[0.0, 0.0]]) == 0.5
    y = rng.normal(size=(7, 3))
    s = 0.0
    for i in range(7):
        for j in range(3):
            s += (x[i, j] - y[i, j]) ** 2
    assert ae.mse_loss(x, y) == pytest.approx(s / 21, abs=1e-14)
    with pytest.raises(ValueError):
        ae.mse_loss(np.empty((0, 3)), np.empty((0, 3)))


def test_gradient_zero_at_perfect_reconstruction(rng):
    net = ae.AeParams(identity_mlp(3), identity_mlp(3))
    loss, g = ae.grad_autoencoder(net, rng.normal(size=(10, 3)))
    assert loss == 0.0
    assert np.max(np.abs(ae.flatten(g))) == 0.0


def test_linear_gradient_closed_form(rng):
    enc = ae.MlpParams([2, 2], [rng.normal(size=(2, 2))], [rng.normal(size=2)], "identity")
    dec = ae.MlpParams([2, 2], [rng.normal(size=(2, 2))], [rng.normal(size=2)], "identity")
    X = rng.normal(size=(9, 2))
    _, g = ae.grad_autoencoder(ae.AeParams(enc, dec), X)
    h = X @ enc.weights[0].T + enc.biases[0]
    r = h @ dec.weights[0].T + dec.biases[0] - X
    c = 2.0 / r.size
    np.testing.assert_allclose(g.decoder.weights[0], c * r.T @ h, atol=1e-10)
    np.testing.assert_allclose(g.decoder.biases[0], c * r.sum(axis=0), atol=1e-10)
    d_h = c * r @ dec.weights[0]
    np.testing.assert_allclose(g.encoder.weights[0], d_h.T @ X, atol=1e-10)
    np.testing.assert_allclose(g.encoder.biases[0], d_h.sum(axis=0), atol=1e-10)


@pytest.mark.parametrize("arch", ae.GRADCHECK_ARCHITECTURES)
def test_gradient_check(arch):
    assert ae.gradient_check(arch, seed=0) < 1e-4


def test_gradient_check_detects_sign_flip():
    def flipped(net, X):
        loss, g = ae.grad_autoencoder(net, X)
        for a in g.arrays():
            a *= -1.0
        return loss, g

    assert ae.gradient_check([3, 8, 2, 8, 3], grad_fn=flipped) > 1.0


def test_training_step_zero_is_identity(rng):
    net = ae.init_autoencoder([3, 8, 2, 8, 3], seed=1)
    X = rng.normal(size=(100, 3))
    out, trace = ae.train_autoencoder(net, X, epochs=3, step=0.0)
    np.testing.assert_array_equal(ae.flatten(out), ae.flatten(net))
    assert len(set(trace)) == 1


def test_linear_net_learns_rank_one_data(rng):
    t = rng.normal(size=(500, 1))
    X = t @ np.array([[0.8, -0.6]]) + np.array([0.5, 1.0])
    net = ae.init_autoencoder([2, 1, 2], seed=3, activation="identity")
    _, trace = ae.train_autoencoder(net, X, epochs=200, batch=32, step=0.05, seed=0)
    assert trace[-1] < 1e-4


def test_training_is_deterministic_and_pure(rng):
    X = gen_cluster3d(n=300, seed=2).data
    net = ae.init_autoencoder([3, 8, 2, 8, 3], seed=4)
    a = ae.train_autoencoder(net, X, epochs=5, seed=1)
    b = ae.train_autoencoder(net, X, epochs=5, seed=1)
    assert a[1] == b[1]
    np.testing.assert_array_equal(ae.reconstruct(a[0], X), ae.reconstruct(a[0], X))


def test_training_trace_finite_on_generators():
    spec = LayerSpec([[(0.9, 0.5), (0.5, 0.5)], [(1.0, 1.0)]], [CLUSTER_NOISE, CLUSTER_NOISE])
    for X in (gen_cluster3d(n=500, seed=0).data, dgmm_sample(spec, 500, 0).data):
        _, trace = ae.train_autoencoder(ae.init_autoencoder([3, 8, 2, 8, 3], seed=0), X, epochs=30)
        assert np.all(np.isfinite(trace))
        assert trace[-1] < trace[0]


def test_divergence_reports_last_finite_state(rng):
    X = 100.0 * rng.normal(size=(200, 3))
    with pytest.raises(ae.TrainingDiverged) as exc:
        ae.train_autoencoder(ae.init_autoencoder([3, 8, 3], seed=0, activation="identity"), X, epochs=50, step=10.0)
    assert np.all(np.isfinite(ae.flatten(exc.value.params)))
    assert np.all(np.isfinite(exc.value.trace))


def test_split_and_serialization(tmp_path):
    assert ae.split_architecture([3, 8, 2, 8, 3]) == ([3, 8, 2], [2, 8, 3])
    with pytest.raises(ValueError):
        ae.split_architecture([3, 2, 2, 3])
    net = ae.init_autoencoder([3, 16, 8, 2, 8, 16, 3], seed=5)
    ae.save_ae(tmp_path / "ae.json", net)
    back = ae.load_ae(tmp_path / "ae.json")
    np.testing.assert_array_equal(ae.flatten(back), ae.flatten(net))
