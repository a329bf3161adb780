import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hqnrate import _pykernels, kernels

try:
    from hqnrate import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def _inputs(r, n, d, k):
    X = r.standard_normal((n, d))
    means = r.standard_normal((k, d))
    a = r.standard_normal((k, d, d))
    cov = a @ np.transpose(a, (0, 2, 1)) + np.eye(d)
    prec = np.ascontiguousarray(np.linalg.inv(np.linalg.cholesky(cov)))
    return X, means, prec, r.standard_normal(k)


def test_numpy_kernel_matches_direct_formula(rng):
    X, means, prec, lc = _inputs(rng, 20, 3, 4)
    out = _pykernels.component_log_prob(X, means, prec, lc)
    for i in range(20):
        for r in range(4):
            v = prec[r] @ (X[i] - means[r])
            assert out[i, r] == pytest.approx(lc[r] - 0.5 * v @ v, abs=1e-12)


@needs_ext
@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(1, 4), st.integers(1, 8), st.integers(0, 10_000))
def test_backends_agree(n, d, k, seed):
    X, means, prec, lc = _inputs(np.random.default_rng(seed), n, d, k)
    a = _ckernels.component_log_prob(X, means, prec, lc)
    b = _pykernels.component_log_prob(X, means, prec, lc)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(_ckernels.logsumexp_rows(a), _pykernels.logsumexp_rows(a), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("impl", [_pykernels, _ckernels] if _ckernels else [_pykernels])
def test_logsumexp_edge_cases(impl):
    A = np.array([[-np.inf, -np.inf], [-1000.0, -1000.0], [0.0, -np.inf], [700.0, 700.0]])
    out = impl.logsumexp_rows(A)
    assert out[0] == -np.inf
    assert out[1] == pytest.approx(-1000.0 + np.log(2))
    assert out[2] == 0.0
    assert out[3] == pytest.approx(700.0 + np.log(2))


def test_backend_selected_at_import():
    assert kernels.BACKEND in ("cython", "python")
    env = dict(os.environ, HQNRATE_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", "from hqnrate import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "python"


@needs_ext
def test_compiled_backend_is_default():
    env = {k: v for k, v in os.environ.items() if k != "HQNRATE_PURE_PYTHON"}
    res = subprocess.run([sys.executable, "-c", "from hqnrate import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "cython"
