"""Hybrid quantum noise channel modelling: GMM-EM and deep autoencoder GMM fits
and Monte-Carlo achievable-rate estimation."""

__version__ = "0.1.0"

from hqnrate.kernels import BACKEND  # noqa: E402,F401
