"""Closed-form per-step gains for the perceptual Kalman filter.

Each step solves ``max_Pi tr(Pi M B)`` subject to ``Q - Pi M Pi^T >= 0``,
where ``M`` is the Kalman update covariance, ``Q`` the process noise and
``B`` accumulates the future weighted error caused by the step's choice.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import psd_linalg as la
from .errors import AssumptionViolated


@dataclass(frozen=True, eq=False)
class WeightSchedule:
    B: np.ndarray  # (T+1, n, n)


@dataclass(frozen=True, eq=False)
class DualCertificate:
    S_star: np.ndarray
    S_minus_star: np.ndarray
    value: float
    closed_form_value: float


@dataclass(frozen=True, eq=False)
class GainResult:
    """A closed-form gain together with its objective ``tr(Pi M B)``."""

    Pi: np.ndarray
    value: float
    assumption_holds: bool


def weight_matrices(A, alpha, T=None):
    """``B_k = sum_{t>=k} alpha_t (A^{t-k})^T A^{t-k}`` by the backward recursion."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if T is None:
        T = alpha.shape[0] - 1
    n = A.shape[0]
    B = np.empty((T + 1, n, n))
    nxt = np.zeros((n, n))
    eye = np.eye(n)
    for k in range(T, -1, -1):
        nxt = la.symmetrize(alpha[k] * eye + A.T @ nxt @ A)
        B[k] = nxt
    return WeightSchedule(B=B)


def _weighted_update(M, B):
    M_B = la.symmetrize(B @ M @ B)
    root, root_pinv = la.sqrt_and_pinv_sqrt(M_B)
    return M_B, root, root_pinv


def _polar_gain(Q, M, B):
    """``Q^{1/2} W M^{1/2 +}`` with ``W`` the polar factor of ``(M^{1/2} B Q^{1/2})^T``.

    Same optimum as the closed form whenever ``im(B M B) ⊆ im(Q)``, but it
    never forms ``B M B``, whose conditioning is roughly ``cond(B)^2 cond(M)``.
    Returns the gain and the singular values of ``M^{1/2} B Q^{1/2}``.
    """
    q, _ = la.sqrt_and_pinv_sqrt(Q)
    m, m_pinv = la.sqrt_and_pinv_sqrt(M)
    U, s, Vt = np.linalg.svd(m @ B @ q)
    r = int(np.count_nonzero(s > la.RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    return q @ Vt[:r].T @ U[:, :r].T @ m_pinv, s


def pkf_gain(Q, M, B, warn=True):
    """Optimal innovation gain ``Pi*`` for one step.

    ``Pi* = Q M_B^{1/2} (M_B^{1/2} Q M_B^{1/2})^{1/2 +} (M_B^{1/2})^+ B M M^+``
    with ``M_B = B M B``. Optimality needs ``im(B M B) ⊆ im(Q)``. When it
    holds the gain is evaluated in the equivalent polar form, which stays
    accurate when ``B M B`` is ill-conditioned. When it fails the formula is
    evaluated as written and an :class:`AssumptionViolated` warning is emitted.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    M_B, root, root_pinv = _weighted_update(M, B)
    holds = la.image_contained(M_B, Q)
    if not holds and warn:
        warnings.warn("im(B M B) is not contained in im(Q); gain may be sub-optimal", AssumptionViolated,
                      stacklevel=2)
    if holds:
        Pi, _ = _polar_gain(Q, M, B)
    else:
        inner = la.symmetrize(root @ Q @ root)
        _, inner_root_pinv = la.sqrt_and_pinv_sqrt(inner)
        Pi = Q @ root @ inner_root_pinv @ root_pinv @ B @ (M @ la.pinv_psd(M))
    return GainResult(Pi=Pi, value=float(np.trace(Pi @ M @ B)), assumption_holds=holds)


def pkf_gain_alt(Q, M, B):
    """Optimal gain under the alternative assumption ``im(M) ⊆ im(Q)``.

    With ``b = B^{1/2}``, ``Q_b = b Q b`` and ``M_b = b M b``::

        Pi* = Q b M_b^{1/2} (M_b^{1/2} Q_b M_b^{1/2})^{1/2 +} (M_b^{1/2})^+ b
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    holds = la.image_contained(M, Q)
    if not holds:
        raise AssumptionViolated("alternative closed form requires im(M) ⊆ im(Q)")
    b = la.sqrt_psd(B)
    Q_b = la.symmetrize(b @ Q @ b)
    M_b = la.symmetrize(b @ M @ b)
    root, root_pinv = la.sqrt_and_pinv_sqrt(M_b)
    _, inner_root_pinv = la.sqrt_and_pinv_sqrt(la.symmetrize(root @ Q_b @ root))
    Pi = Q @ b @ root @ inner_root_pinv @ root_pinv @ b @ (M @ la.pinv_psd(M))
    return GainResult(Pi=Pi, value=float(np.trace(Pi @ M @ B)), assumption_holds=holds)


def optimal_value(Q, M, B):
    """``tr((M_B^{1/2} Q M_B^{1/2})^{1/2})``, the optimum of ``tr(Pi M B)``.

    Computed as the nuclear norm of ``M^{1/2} B Q^{1/2}``, which has the same
    singular values.
    """
    m, _ = la.sqrt_and_pinv_sqrt(np.atleast_2d(M))
    q, _ = la.sqrt_and_pinv_sqrt(np.atleast_2d(Q))
    return float(np.linalg.svd(m @ np.atleast_2d(B) @ q, compute_uv=False).sum())


def dual_certificate(Q, M, B, rtol=1e-6):
    """Dual pair ``(S*, S^-*)`` certifying the optimum of ``max tr(2 Pi B)``.

    ``S* = M_B^{1/2} (M_B^{1/2} Q M_B^{1/2})^{1/2 +} M_B^{1/2}`` and
    ``S^-* = (M_B^{1/2})^+ (M_B^{1/2} Q M_B^{1/2})^{1/2} (M_B^{1/2})^+``, built
    as the equivalent geometric means of ``Q^+`` and ``M_B`` from the SVD of
    ``M^{1/2} B Q^{1/2}`` so that ``B M B`` is never inverted.
    ``value = Q•S* + M•(B S^-* B)`` equals ``2 tr((M_B^{1/2} Q M_B^{1/2})^{1/2})``
    whenever ``im(B M B) ⊆ im(Q)``; otherwise :class:`AssumptionViolated` is
    raised as an error.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    M_B = la.symmetrize(B @ M @ B)
    if not la.image_contained(M_B, Q):
        raise AssumptionViolated("strong duality requires im(B M B) ⊆ im(Q)")
    # (Q^{1/2} M_B Q^{1/2})^{1/2} = V diag(s) V^T from the SVD of M^{1/2} B Q^{1/2}
    q, q_pinv = la.sqrt_and_pinv_sqrt(Q)
    m, _ = la.sqrt_and_pinv_sqrt(M)
    _, s, Vt = np.linalg.svd(m @ B @ q)
    r = int(np.count_nonzero(s > la.RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    V, s = Vt[:r].T, s[:r]
    S_star = la.symmetrize(q_pinv @ (V * s) @ V.T @ q_pinv)
    S_minus = la.symmetrize(q @ (V / s) @ V.T @ q)
    value = float(np.sum(Q * S_star) + np.sum(M * (B @ S_minus @ B)))
    closed = 2.0 * float(s.sum())
    if abs(value - closed) > rtol * max(1.0, abs(closed)):
        raise AssumptionViolated(f"dual value {value:.6g} does not match closed form {closed:.6g}")
    return DualCertificate(S_star=S_star, S_minus_star=S_minus, value=value, closed_form_value=closed)
