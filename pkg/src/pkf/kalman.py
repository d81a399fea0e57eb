"""Classic Kalman filter exposing every intermediate used by perceptual filters."""

from dataclasses import dataclass

import numpy as np

from . import psd_linalg as la
from .errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class KalmanGains:
    """Measurement-independent Kalman quantities for steps ``0..T``.

    ``P_prior[0]`` is ``P0``. ``M[k] = K[k] S[k] K[k]^T`` is the covariance
    of the Kalman update ``K_k I_k``.
    """

    K: np.ndarray
    S: np.ndarray
    M: np.ndarray
    P_prior: np.ndarray
    P_post: np.ndarray

    @property
    def T(self):
        return self.K.shape[0] - 1

    def mmse(self):
        """``d*_k = tr(P_{k|k})``, the minimal achievable MSE per step."""
        return np.trace(self.P_post, axis1=1, axis2=2)


@dataclass(frozen=True, eq=False)
class KalmanRun:
    """Kalman outputs on measurements of shape ``(T+1, n_y)`` or ``(N, T+1, n_y)``."""

    x_star: np.ndarray
    x_prior: np.ndarray
    innovation: np.ndarray
    gains: KalmanGains

    @property
    def K(self):
        return self.gains.K

    @property
    def S(self):
        return self.gains.S

    @property
    def M(self):
        return self.gains.M

    @property
    def P_prior(self):
        return self.gains.P_prior

    @property
    def P_post(self):
        return self.gains.P_post


def kalman_gains(model):
    """Gains, innovation covariances and error covariances for every step.

    ``S_k`` is inverted with a pseudo-inverse so that steps without
    information (``C_k = 0`` and ``R_k = 0``) are well defined.
    """
    T, n_x, n_y = model.T, model.n_x, model.n_y
    K = np.empty((T + 1, n_x, n_y))
    S = np.empty((T + 1, n_y, n_y))
    M = np.empty((T + 1, n_x, n_x))
    P_prior = np.empty((T + 1, n_x, n_x))
    P_post = np.empty((T + 1, n_x, n_x))
    P = model.P0
    for k in range(T + 1):
        if k > 0:
            A = model.A_at(k)
            P = la.symmetrize(A @ P_post[k - 1] @ A.T + model.Q_at(k))
        C = model.C_at(k)
        S_k = la.symmetrize(C @ P @ C.T + model.R_at(k))
        K_k = P @ C.T @ la.pinv_psd(S_k)
        P_prior[k] = P
        S[k] = S_k
        K[k] = K_k
        M[k] = la.clamp_psd(K_k @ S_k @ K_k.T)
        P_post[k] = la.clamp_psd(P - K_k @ C @ P)
    return KalmanGains(K=K, S=S, M=M, P_prior=P_prior, P_post=P_post)


def _batch_measurements(model, Y):
    Y = np.asarray(Y, dtype=float)
    single = Y.ndim == 2
    if single:
        Y = Y[None]
    if Y.ndim != 3 or Y.shape[1:] != (model.T + 1, model.n_y):
        raise DimensionMismatch(
            f"measurements must have shape (T+1, n_y) = {(model.T + 1, model.n_y)}, got {Y.shape[-2:]}")
    return Y, single


def kalman_filter(model, Y, gains=None):
    """Run the Kalman recursion on one measurement sequence or a batch."""
    if gains is None:
        gains = kalman_gains(model)
    Yb, single = _batch_measurements(model, Y)
    N, T1 = Yb.shape[:2]
    x_star = np.empty((N, T1, model.n_x))
    x_prior = np.empty_like(x_star)
    innov = np.empty_like(Yb)
    x = np.zeros((N, model.n_x))
    for k in range(T1):
        xp = x @ model.A_at(k).T if k > 0 else x
        I_k = Yb[:, k] - xp @ model.C_at(k).T
        x = xp + I_k @ gains.K[k].T
        x_prior[:, k] = xp
        innov[:, k] = I_k
        x_star[:, k] = x
    if single:
        x_star, x_prior, innov = x_star[0], x_prior[0], innov[0]
    return KalmanRun(x_star=x_star, x_prior=x_prior, innovation=innov, gains=gains)
