"""Gaussian optimal transport for perfect-perception static estimation.

Given the prior covariance of a signal ``x`` and the covariance of its MMSE
estimate ``x*``, :func:`transport_map` returns the linear map and the
independent noise that turn ``x*`` into an estimate distributed exactly like
``x`` with the smallest possible MSE.
"""

from dataclasses import dataclass

import numpy as np

from . import psd_linalg as la
from .errors import DimensionMismatch, TooFewSamples


@dataclass(frozen=True, eq=False)
class TransportMap:
    T_star: np.ndarray
    Sigma_w: np.ndarray


def transport_map(Sigma_x, Sigma_xstar):
    """Optimal map ``x* -> T x* + w`` pushing ``N(0, Sigma_xstar)`` to ``N(0, Sigma_x)``.

    Uses the form valid for singular ``Sigma_x``::

        T = Sx Sxs^{1/2} (Sxs^{1/2} Sx Sxs^{1/2})^{1/2 +} (Sxs^{1/2})^+
    """
    Sx = np.atleast_2d(np.asarray(Sigma_x, dtype=float))
    Sxs = np.atleast_2d(np.asarray(Sigma_xstar, dtype=float))
    if Sx.shape != Sxs.shape:
        raise DimensionMismatch(f"covariance shapes differ: {Sx.shape} vs {Sxs.shape}")
    root, root_pinv = la.sqrt_and_pinv_sqrt(Sxs)
    inner = la.symmetrize(root @ Sx @ root)
    _, inner_root_pinv = la.sqrt_and_pinv_sqrt(inner)
    T_star = Sx @ root @ inner_root_pinv @ root_pinv
    Sigma_w = la.clamp_psd(Sx - T_star @ Sxs @ T_star.T)
    return TransportMap(T_star=T_star, Sigma_w=Sigma_w)


def bures_cross_term(Sigma1, Sigma2):
    """``tr((S1^{1/2} S2 S1^{1/2})^{1/2})``."""
    root = la.sqrt_psd(Sigma1)
    return float(np.trace(la.sqrt_psd(la.symmetrize(root @ Sigma2 @ root))))


def gelbrich_distance(mu1, Sigma1, mu2, Sigma2):
    """Wasserstein-2 distance between ``N(mu1, Sigma1)`` and ``N(mu2, Sigma2)``."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    S1 = np.atleast_2d(np.asarray(Sigma1, dtype=float))
    S2 = np.atleast_2d(np.asarray(Sigma2, dtype=float))
    if S1.shape != S2.shape or mu1.shape != mu2.shape or mu1.shape[0] != S1.shape[0]:
        raise DimensionMismatch("means and covariances must share one dimension")
    cov_part = np.trace(S1) + np.trace(S2) - 2.0 * bures_cross_term(S1, S2)
    d2 = float(np.sum((mu1 - mu2) ** 2)) + max(cov_part, 0.0)
    return float(np.sqrt(d2))


def fit_gaussian(samples):
    """Sample mean and 1/N-normalized covariance of an ``(N, n)`` sample array."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 samples, got {X.shape[0]}")
    mu = X.mean(axis=0)
    Xc = X - mu
    cov = la.clamp_psd(Xc.T @ Xc / X.shape[0])
    return mu, cov
