"""Pure-numpy Gaussian-mixture density kernels (fallback for ``_ckernels``)."""
import numpy as np


def component_log_prob(X, means, prec_chol, log_const):
    """out[i, r] = log_const[r] - 0.5 * ||P_r (x_i - mu_r)||^2 with P_r lower triangular."""
    n, k = X.shape[0], means.shape[0]
    out = np.empty((n, k))
    for r in range(k):
        z = (X - means[r]) @ prec_chol[r].T
        out[:, r] = log_const[r] - 0.5 * np.einsum("ij,ij->i", z, z)
    return out


def logsumexp_rows(A):
    """Row-wise log-sum-exp; rows that are entirely -inf give -inf."""
    m = A.max(axis=1)
    finite = np.isfinite(m)
    safe = np.where(finite, m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.exp(A - safe[:, None]).sum(axis=1))
    return np.where(finite, safe + s, -np.inf)
