"""Analytic MSE recursions and empirical quality curves.

For every perfect-perception filter the error splits as
``E||x_k - x_hat_k||^2 = tr(P_{k|k}) + tr(D_k)`` where ``D_k`` is the
covariance of ``x_hat_k - x*_k``. Quality is measured by the Gelbrich
(Wasserstein-2) distance between a Gaussian fitted to filter outputs and the
exact law of the true state, per step and over sliding windows.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import psd_linalg as la
from .errors import DimensionMismatch
from .gaussian_transport import fit_gaussian, gelbrich_distance
from .lgssm import sample_batch, state_covariances, windowed_state_covariance

DEFAULT_WINDOW = 16
CSV_COLUMNS = ("k", "analytic_mse", "empirical_mse", "mc_stderr", "marginal_gelbrich", "windowed_gelbrich")


def dk_pkf(model, kgains, schedule):
    """``D_k = A D_{k-1} A^T + Q_k + M_k - Pi_k M_k - M_k Pi_k^T`` with ``D_{-1} = 0``."""
    T, n = model.T, model.n_x
    D = np.empty((T + 1, n, n))
    prev = np.zeros((n, n))
    for k in range(T + 1):
        A = model.A_at(k) if k > 0 else np.eye(n)
        M, Pi = kgains.M[k], schedule.Pi[k]
        prev = la.symmetrize(A @ prev @ A.T + model.Q_at(k) + M - Pi @ M - M @ Pi.T)
        D[k] = prev
    return D


def dk_recursive(model, kgains, schedule):
    """:func:`dk_pkf` minus the contribution of reused information ``Phi_k A_k Upsilon_k``."""
    T, n = model.T, model.n_x
    D = np.empty((T + 1, n, n))
    prev = np.zeros((n, n))
    Phi = schedule.Phi if schedule.Phi is not None else np.zeros_like(schedule.Pi)
    SU = schedule.Sigma_Ups if schedule.Sigma_Ups is not None else np.zeros_like(schedule.Pi)
    for k in range(T + 1):
        A = model.A_at(k) if k > 0 else np.eye(n)
        M, Pi, F = kgains.M[k], schedule.Pi[k], Phi[k]
        G = A @ SU[k] @ A.T
        prev = la.symmetrize(A @ prev @ A.T + model.Q_at(k) + M - Pi @ M - M @ Pi.T - G @ F.T - F @ G)
        D[k] = prev
    return D


def analytic_mse(model, kgains, schedule):
    """Per-step ``tr(P_{k|k}) + tr(D_k)`` for a PKF or recursive schedule."""
    D = dk_recursive(model, kgains, schedule) if schedule.Phi is not None else dk_pkf(model, kgains, schedule)
    return kgains.mmse() + np.trace(D, axis1=1, axis2=2)


@dataclass(frozen=True, eq=False)
class QualityReport:
    """Per-step error and quality curves of one filter on one batch.

    ``windowed_gelbrich`` is NaN for steps with fewer than ``window``
    preceding states.
    """

    k: np.ndarray
    analytic_mse: np.ndarray
    empirical_mse: np.ndarray
    mc_stderr: np.ndarray
    marginal_gelbrich: np.ndarray
    windowed_gelbrich: np.ndarray
    kind: str = ""
    n_trajectories: int = 0
    window: int = DEFAULT_WINDOW
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in zip(self.k, self.analytic_mse, self.empirical_mse, self.mc_stderr,
                           self.marginal_gelbrich, self.windowed_gelbrich):
                w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])

    @classmethod
    def from_csv(cls, path, **meta):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != CSV_COLUMNS:
            raise ValueError(f"unexpected quality report header {rows[0]}")
        body = np.array(rows[1:], dtype=float).reshape(-1, len(CSV_COLUMNS))
        return cls(k=body[:, 0].astype(int), analytic_mse=body[:, 1], empirical_mse=body[:, 2],
                   mc_stderr=body[:, 3], marginal_gelbrich=body[:, 4], windowed_gelbrich=body[:, 5], **meta)


class MomentAccumulator:
    """Running per-step sums for curves over batches too large to hold at once.

    Feed ``(N, T+1, n)`` chunks of estimates and truths; the per-step
    squared-error mean, its standard error and the estimates' first and
    second moments are available at any point.
    """

    def __init__(self, T1, n):
        self.count = 0
        self.err = np.zeros(T1)
        self.err2 = np.zeros(T1)
        self.s1 = np.zeros((T1, n))
        self.s2 = np.zeros((T1, n, n))

    def add(self, estimates, truths=None):
        X = np.asarray(estimates, dtype=float)
        self.count += X.shape[0]
        if truths is not None:
            e = np.sum((X - truths) ** 2, axis=2)
            self.err += e.sum(axis=0)
            self.err2 += (e ** 2).sum(axis=0)
        self.s1 += X.sum(axis=0)
        self.s2 += np.einsum("nki,nkj->kij", X, X)

    def mse(self):
        mean = self.err / self.count
        var = np.maximum(self.err2 / self.count - mean ** 2, 0.0)
        return mean, np.sqrt(var / max(self.count - 1, 1))

    def moments(self):
        mu = self.s1 / self.count
        cov = self.s2 / self.count - np.einsum("ki,kj->kij", mu, mu)
        return mu, np.array([la.clamp_psd(c) for c in cov])


def mse_curve(estimates, truths):
    """Per-step mean squared error and its Monte-Carlo standard error."""
    X = np.asarray(estimates, dtype=float)
    Y = np.asarray(truths, dtype=float)
    if X.shape != Y.shape or X.ndim != 3:
        raise DimensionMismatch(f"estimates {X.shape} and truths {Y.shape} must be aligned (N, T+1, n) batches")
    e = np.sum((X - Y) ** 2, axis=2)
    N = e.shape[0]
    return e.mean(axis=0), e.std(axis=0, ddof=1) / np.sqrt(N) if N > 1 else np.zeros(e.shape[1])


def marginal_gelbrich(samples_k, Sigma):
    """Distance between a Gaussian fitted to ``(N, n)`` samples and ``N(0, Sigma)``."""
    mu, cov = fit_gaussian(samples_k)
    return gelbrich_distance(mu, cov, np.zeros_like(mu), Sigma)


def window_samples(X, k, w):
    """Stacked ``(x_{k-w+1}, ..., x_k)`` per trajectory, shape ``(N, w * n)``."""
    return X[:, k - w + 1:k + 1].reshape(X.shape[0], -1)


def windowed_gelbrich(X, model, k, w=DEFAULT_WINDOW, covs=None):
    return marginal_gelbrich(window_samples(X, k, w), windowed_state_covariance(model, k, w, covs))


def empirical_curves(model, estimates, truths, analytic=None, window=DEFAULT_WINDOW, kind="", seed=0,
                     steps=None, covs=None):
    """Quality report of a filter batch against its ground-truth batch.

    ``steps`` restricts the Gelbrich computations (other steps get NaN);
    by default every step is evaluated.
    """
    X = np.asarray(estimates, dtype=float)
    mse, se = mse_curve(X, truths)
    N, T1, _ = X.shape
    if N < 2:
        raise DimensionMismatch("need at least two trajectories")
    if covs is None:
        covs = state_covariances(model)
    steps = range(T1) if steps is None else steps
    marg = np.full(T1, np.nan)
    wind = np.full(T1, np.nan)
    for k in steps:
        marg[k] = marginal_gelbrich(X[:, k], covs[k])
        if k >= window - 1:
            wind[k] = windowed_gelbrich(X, model, k, window, covs)
    if analytic is None:
        analytic = np.full(T1, np.nan)
    return QualityReport(k=np.arange(T1), analytic_mse=np.asarray(analytic, dtype=float), empirical_mse=mse,
                         mc_stderr=se, marginal_gelbrich=marg, windowed_gelbrich=wind, kind=kind,
                         n_trajectories=N, window=window, seed=seed)


def sampling_floor(model, n, seed, steps, window=DEFAULT_WINDOW, start=None, replicates=1):
    """Gelbrich distance between independent ground-truth batches of size ``n``.

    Replicate ``r`` compares the batches on trajectory streams
    ``start + 2rn ..`` and ``start + (2r+1)n ..`` (default ``start = n``, i.e.
    disjoint from a filter batch on streams ``0..n-1``). With several
    replicates the root-mean-square distance is returned. Results are
    ``(marginal, windowed)`` arrays aligned with ``steps``.
    """
    start = n if start is None else start
    steps = list(steps)
    marg = np.zeros(len(steps))
    wind = np.zeros(len(steps))
    for r in range(replicates):
        a = sample_batch(model, n, seed, start=start + 2 * r * n).states
        b = sample_batch(model, n, seed, start=start + (2 * r + 1) * n).states
        for i, k in enumerate(steps):
            ma, ca = fit_gaussian(a[:, k])
            mb, cb = fit_gaussian(b[:, k])
            marg[i] += gelbrich_distance(ma, ca, mb, cb) ** 2
            if k >= window - 1:
                ma, ca = fit_gaussian(window_samples(a, k, window))
                mb, cb = fit_gaussian(window_samples(b, k, window))
                wind[i] += gelbrich_distance(ma, ca, mb, cb) ** 2
            else:
                wind[i] = np.nan
    return np.sqrt(marg / replicates), np.sqrt(wind / replicates)


def stationary_mse_curve(model, sol):
    """Exact per-step MSE of the stationary PKF and of the constant-gain Kalman filter.

    Both start from zero estimates; the joint covariance of the true state,
    the constant-gain Kalman state and the filter output is propagated.
    Returns ``(filter_mse, kalman_mse)``.
    """
    n = model.n_x
    A, C, K, Pi = model.A, model.C, sol.K, sol.Pi
    I = np.eye(n)
    Z = np.zeros((n, n))
    F = np.block([[A, Z, Z], [K @ C @ A, (I - K @ C) @ A, Z], [Pi @ K @ C @ A, -Pi @ K @ C @ A, A]])
    Zy = np.zeros((n, model.n_y))
    L = np.block([[I, Zy, Z], [K @ C, K, Z], [Pi @ K @ C, Pi @ K, I]])
    sel_f = np.hstack([I, Z, -I])
    sel_k = np.hstack([I, -I, Z])
    cov = np.zeros((3 * n, 3 * n))
    out_f = np.empty(model.T + 1)
    out_k = np.empty(model.T + 1)
    for k in range(model.T + 1):
        q = model.P0 if k == 0 else model.Q
        noise = np.zeros((2 * n + model.n_y, 2 * n + model.n_y))
        noise[:n, :n] = q
        noise[n:n + model.n_y, n:n + model.n_y] = model.R
        noise[n + model.n_y:, n + model.n_y:] = sol.Sigma_w
        cov = la.symmetrize(F @ cov @ F.T + L @ noise @ L.T)
        out_f[k] = np.trace(sel_f @ cov @ sel_f.T)
        out_k[k] = np.trace(sel_k @ cov @ sel_k.T)
    return out_f, out_k
