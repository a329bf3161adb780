"""Backend selection for the mixture-density hot loops.

The compiled extension is used when it was built; otherwise the numpy
implementation is loaded. Set ``HQNRATE_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

if os.environ.get("HQNRATE_PURE_PYTHON", "") not in ("", "0"):
    from hqnrate import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from hqnrate import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from hqnrate import _pykernels as _impl
        BACKEND = "python"


def component_log_prob(X, means, prec_chol, log_const):
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _impl.component_log_prob(
        X,
        np.ascontiguousarray(means, dtype=np.float64),
        np.ascontiguousarray(prec_chol, dtype=np.float64),
        np.ascontiguousarray(log_const, dtype=np.float64),
    )


def logsumexp_rows(A):
    return _impl.logsumexp_rows(np.ascontiguousarray(A, dtype=np.float64))
