"""Online runtimes for the Kalman-derived perceptual filters.

Every perfect-perception filter here has the form ``x_k = A_k x_{k-1} + J_k``
where the update ``J_k`` is distributed as ``N(0, Q_k)`` and independent of
the filter's past outputs. Filters differ only in how ``J_k`` mixes the
current innovation, previously unused information and fresh noise.

All runtimes accept a single trajectory ``(T+1, n_y)`` or a batch
``(N, T+1, n_y)`` of measurements; noise for trajectory ``i`` of a batch
starting at stream ``start`` is drawn from stream ``start + i``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import psd_linalg as la
from .errors import DimensionMismatch, InfeasibleSchedule, NoConvergence, UnstableA
from .gaussian_transport import bures_cross_term, transport_map
from .kalman import kalman_filter
from .lgssm import standard_normals, state_covariances, stream_tag
from .perceptual_gain import pkf_gain

#: Sigma_w eigenvalues below -FEAS_TOL * ||Q_k|| are a hard failure
FEAS_TOL = 1e-6

PKF = "pkf"
RECURSIVE = "recursive"
STATIONARY = "stationary"


@dataclass(frozen=True, eq=False)
class GainSchedule:
    """Coefficients of a perfect-perception filter for steps ``0..T``.

    ``Phi``, ``Sigma_Ups`` and ``Psi`` are ``None`` for the PKF, whose update
    uses the current innovation only.
    """

    kind: str
    Pi: np.ndarray
    Sigma_w: np.ndarray
    Phi: np.ndarray = None
    Sigma_Ups: np.ndarray = None
    Psi: np.ndarray = None
    label: str = ""
    model_digest: str = ""
    objective_value: float = float("nan")
    info: dict = None

    @property
    def T(self):
        return self.Pi.shape[0] - 1

    def validate(self, model, kgains, tol=FEAS_TOL):
        """Raise :class:`InfeasibleSchedule` naming the first bad step."""
        if self.Pi.shape != (model.T + 1, model.n_x, model.n_x):
            raise DimensionMismatch(f"gain schedule shape {self.Pi.shape} does not match the model")
        Phi = self.Phi if self.Phi is not None else np.zeros_like(self.Pi)
        ref = recursive_quantities(model, kgains, self.Pi, Phi, check=False)
        for k in range(model.T + 1):
            Q = model.Q_at(k)
            scale = max(np.linalg.norm(Q, 2), 1e-300)
            if la.min_eig(ref["Sigma_w_raw"][k]) < -tol * scale:
                raise InfeasibleSchedule(f"noise covariance is not PSD at step {k}", step=k)
            if np.abs(self.Sigma_w[k] - ref["Sigma_w"][k]).max() > 1e-6 * (1.0 + scale):
                raise InfeasibleSchedule(f"stored noise covariance inconsistent at step {k}", step=k)
            if self.kind == RECURSIVE and self.Sigma_Ups is not None:
                if np.abs(self.Sigma_Ups[k] - ref["Sigma_Ups"][k]).max() > 1e-6 * (1.0 + np.abs(ref["Sigma_Ups"][k]).max()):
                    raise InfeasibleSchedule(f"unutilized-information covariance inconsistent at step {k}", step=k)
        return True


@dataclass(frozen=True, eq=False)
class FilterRun:
    """Filter outputs; ``estimates[..., k, :]`` is ``x_hat_k``.

    ``updates`` holds the realized ``J_k = x_hat_k - A_k x_hat_{k-1}`` and
    ``ups`` the unutilized-information state ``Upsilon_k`` (recursive form).
    """

    kind: str
    estimates: np.ndarray
    updates: np.ndarray
    seed: int
    ups: np.ndarray = None
    start: int = 0

    def to_csv(self, path):
        write_filter_csv(self, path)


@dataclass(frozen=True, eq=False)
class StationarySolution:
    P: np.ndarray
    P_post: np.ndarray
    K: np.ndarray
    S: np.ndarray
    M: np.ndarray
    B: np.ndarray
    Pi: np.ndarray
    D: np.ndarray
    Sigma_w: np.ndarray

    def steady_mse(self):
        """Long-run MSE ``tr(P_post) + tr(D)``."""
        return float(np.trace(self.P_post) + np.trace(self.D))


# ---------------------------------------------------------------------------
# helpers

def _batched(Y):
    Y = np.asarray(Y, dtype=float)
    return (Y[None], True) if Y.ndim == 2 else (Y, False)


def _unbatch(single, *arrays):
    if not single:
        return arrays
    return tuple(None if a is None else a[0] for a in arrays)


def noise_cov(Sigma_w, Q, step, tol=FEAS_TOL):
    """Clamp a noise covariance, failing hard on violations beyond round-off."""
    scale = np.linalg.norm(Q, 2)
    lo = la.min_eig(Sigma_w)
    if lo < -tol * max(scale, 1e-300) and lo < -1e-14:
        raise InfeasibleSchedule(f"noise covariance has eigenvalue {lo:.3e} at step {step}", step=step)
    return la.clamp_psd(Sigma_w)


def _draw(seed, stream, start, N, T1, n):
    return standard_normals(seed, stream_tag(stream), start, N, (T1, n))


def recursive_quantities(model, kgains, Pi, Phi, check=True):
    """Propagate the unutilized-information covariance for coefficients ``(Pi, Phi)``.

    Returns a dict with per-step ``Sigma_Ups`` (covariance of ``Upsilon_k``),
    ``G = A_k Sigma_Ups_k A_k^T``, ``Psi``, and the noise covariance
    ``Sigma_w = Q_k - Phi G Phi^T - Pi M Pi^T`` (raw and clamped).
    """
    T, n = model.T, model.n_x
    Sigma_Ups = np.zeros((T + 2, n, n))
    G = np.zeros((T + 1, n, n))
    Psi = np.zeros((T + 1, n, n))
    raw = np.zeros((T + 1, n, n))
    clamped = np.zeros((T + 1, n, n))
    for k in range(T + 1):
        A = model.A_at(k)
        Q = model.Q_at(k)
        M = kgains.M[k]
        G[k] = la.symmetrize(A @ Sigma_Ups[k] @ A.T) if k > 0 else 0.0
        raw[k] = la.symmetrize(Q - Phi[k] @ G[k] @ Phi[k].T - Pi[k] @ M @ Pi[k].T)
        clamped[k] = noise_cov(raw[k], Q, k) if check else la.clamp_psd(raw[k])
        Psi[k] = M @ Pi[k].T + G[k] @ Phi[k].T
        Sigma_Ups[k + 1] = la.clamp_psd(G[k] + M - Psi[k] @ la.pinv_psd(Q) @ Psi[k].T)
    return {"Sigma_Ups": Sigma_Ups[:T + 1], "G": G, "Psi": Psi, "Sigma_w_raw": raw, "Sigma_w": clamped}


def pkf_schedule(model, kgains, Pi, label="", objective_value=float("nan"), info=None):
    Pi = np.asarray(Pi, dtype=float)
    Sigma_w = np.array([noise_cov(model.Q_at(k) - Pi[k] @ kgains.M[k] @ Pi[k].T, model.Q_at(k), k)
                        for k in range(model.T + 1)])
    return GainSchedule(kind=PKF, Pi=Pi, Sigma_w=Sigma_w, label=label, model_digest=model.digest(),
                        objective_value=objective_value, info=info)


def recursive_schedule(model, kgains, Pi, Phi, label="", objective_value=float("nan"), info=None):
    q = recursive_quantities(model, kgains, Pi, Phi)
    return GainSchedule(kind=RECURSIVE, Pi=np.asarray(Pi, dtype=float), Phi=np.asarray(Phi, dtype=float),
                        Sigma_w=q["Sigma_w"], Sigma_Ups=q["Sigma_Ups"], Psi=q["Psi"], label=label,
                        model_digest=model.digest(), objective_value=objective_value, info=info)


# ---------------------------------------------------------------------------
# temporally-inconsistent filter

def tic_maps(model, kgains, covs=None):
    """Per-step transport maps from ``N(0, Sigma_xstar_k)`` to ``N(0, Sigma_x_k)``."""
    if covs is None:
        covs = state_covariances(model)
    return [transport_map(covs[k], la.clamp_psd(covs[k] - kgains.P_post[k])) for k in range(model.T + 1)]


def run_tic_filter(model, krun, seed, start=0, stream="tic", maps=None):
    """Per-step optimal-transport estimate ``T_k x*_k + w_k`` with independent ``w_k``."""
    if maps is None:
        maps = tic_maps(model, krun.gains)
    X_star, single = _batched(krun.x_star)
    N, T1, n = X_star.shape
    z = _draw(seed, stream, start, N, T1, n)
    est = np.empty_like(X_star)
    for k, tm in enumerate(maps):
        est[:, k] = X_star[:, k] @ tm.T_star.T + z[:, k] @ la.psd_factor(tm.Sigma_w).T
    upd = est.copy()
    for k in range(1, T1):
        upd[:, k] -= est[:, k - 1] @ model.A_at(k).T
    est, upd = _unbatch(single, est, upd)
    return FilterRun(kind="tic", estimates=est, updates=upd, seed=seed, start=start)


def tic_mse_closed_form(model, kgains, covs=None):
    """Analytic per-step MSE of the temporally-inconsistent filter."""
    if covs is None:
        covs = state_covariances(model)
    out = np.empty(model.T + 1)
    for k in range(model.T + 1):
        Sx = covs[k]
        Sxs = la.clamp_psd(Sx - kgains.P_post[k])
        cross = bures_cross_term(Sx, Sxs)
        out[k] = np.trace(kgains.P_post[k]) + max(np.trace(Sx) + np.trace(Sxs) - 2.0 * cross, 0.0)
    return out


# ---------------------------------------------------------------------------
# perfect-perception filters

def run_pkf(model, kgains, Y, schedule, seed, start=0, krun=None, stream="perceptual"):
    """Perceptual Kalman filter: ``J_k = Pi_k K_k I_k + w_k``."""
    if krun is None:
        krun = kalman_filter(model, Y, kgains)
    innov, single = _batched(krun.innovation)
    N, T1, _ = innov.shape
    n = model.n_x
    z = _draw(seed, stream, start, N, T1, n)
    est = np.empty((N, T1, n))
    upd = np.empty((N, T1, n))
    x = np.zeros((N, n))
    for k in range(T1):
        gain = schedule.Pi[k] @ kgains.K[k]
        J = innov[:, k] @ gain.T + z[:, k] @ la.psd_factor(schedule.Sigma_w[k]).T
        x = (x @ model.A_at(k).T if k > 0 else x) + J
        est[:, k] = x
        upd[:, k] = J
    est, upd = _unbatch(single, est, upd)
    return FilterRun(kind=schedule.kind, estimates=est, updates=upd, seed=seed, start=start)


def run_recursive_filter(model, kgains, Y, schedule, seed, start=0, krun=None, stream="perceptual"):
    """Recursive-form filter ``J_k = Phi_k A_k Upsilon_k + Pi_k K_k I_k + w_k``.

    ``Upsilon_{k+1} = A_k Upsilon_k + K_k I_k - Psi_k Q_k^+ J_k`` tracks the
    part of the Kalman state not yet reflected in the filter's outputs.
    """
    if krun is None:
        krun = kalman_filter(model, Y, kgains)
    innov, single = _batched(krun.innovation)
    N, T1, _ = innov.shape
    n = model.n_x
    Phi = schedule.Phi if schedule.Phi is not None else np.zeros_like(schedule.Pi)
    Psi = schedule.Psi
    if Psi is None:
        Psi = recursive_quantities(model, kgains, schedule.Pi, Phi)["Psi"]
    z = _draw(seed, stream, start, N, T1, n)
    est = np.empty((N, T1, n))
    upd = np.empty((N, T1, n))
    ups = np.empty((N, T1, n))
    x = np.zeros((N, n))
    u = np.zeros((N, n))
    for k in range(T1):
        A = model.A_at(k)
        Au = u @ A.T if k > 0 else u
        KI = innov[:, k] @ kgains.K[k].T
        J = Au @ Phi[k].T + KI @ schedule.Pi[k].T + z[:, k] @ la.psd_factor(schedule.Sigma_w[k]).T
        x = (x @ A.T if k > 0 else x) + J
        est[:, k] = x
        upd[:, k] = J
        ups[:, k] = u
        u = Au + KI - J @ (Psi[k] @ la.pinv_psd(model.Q_at(k))).T
    est, upd, ups = _unbatch(single, est, upd, ups)
    return FilterRun(kind=schedule.kind, estimates=est, updates=upd, seed=seed, ups=ups, start=start)


# ---------------------------------------------------------------------------
# stationary regime

def spectral_radius(A):
    return float(np.abs(np.linalg.eigvals(np.atleast_2d(A))).max(initial=0.0))


def dare_solve(A, C, Q, R, tol=1e-10, max_iter=10**6):
    """Prior error covariance of the steady-state Kalman filter.

    Fixed-point iteration of ``P = A P A^T - A P C^T (C P C^T + R)^+ C P A^T + Q``
    started from ``P = Q``.
    """
    A, C, Q, R = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, C, Q, R))
    P = la.symmetrize(Q)
    for _ in range(max_iter):
        S = la.symmetrize(C @ P @ C.T + R)
        APC = A @ P @ C.T
        P_new = la.symmetrize(A @ P @ A.T - APC @ la.pinv_psd(S) @ APC.T + Q)
        if np.linalg.norm(P_new - P) <= tol * max(np.linalg.norm(P_new), 1e-300):
            return P_new
        P = P_new
    raise NoConvergence(f"Riccati iteration did not converge in {max_iter} steps")


def lyapunov_solve(A, W, tol=1e-10, max_doublings=64):
    """Solve ``X = A X A^T + W`` for stable ``A`` by the doubling iteration.

    After ``j`` doublings ``X`` holds the first ``2**j`` terms of
    ``sum_k A^k W (A^k)^T``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    X = la.symmetrize(W)
    Ak = A
    for _ in range(max_doublings):
        inc = la.symmetrize(Ak @ X @ Ak.T)
        X = X + inc
        if np.linalg.norm(inc) <= tol * max(np.linalg.norm(X), 1e-300):
            return X
        Ak = Ak @ Ak
    raise NoConvergence("Lyapunov doubling iteration did not converge")


def stationary_pkf(model):
    """Steady-state perceptual filter for a time-invariant stable model."""
    if not model.time_invariant:
        raise ValueError("the stationary filter needs a time-invariant model")
    A, C, Q, R = model.A, model.C, model.Q, model.R
    if spectral_radius(A) >= 1.0 - 1e-9:
        raise UnstableA(f"spectral radius {spectral_radius(A):.6f} is not below one")
    P = dare_solve(A, C, Q, R)
    S = la.symmetrize(C @ P @ C.T + R)
    K = P @ C.T @ la.pinv_psd(S)
    M = la.clamp_psd(K @ S @ K.T)
    P_post = la.clamp_psd(P - K @ C @ P)
    B = lyapunov_solve(A.T, np.eye(model.n_x))
    Pi = pkf_gain(Q, M, B).Pi
    D = lyapunov_solve(A, Q + M - Pi @ M - M @ Pi.T)
    Sigma_w = noise_cov(Q - Pi @ M @ Pi.T, Q, step=0)
    return StationarySolution(P=P, P_post=P_post, K=K, S=S, M=M, B=B, Pi=Pi, D=D, Sigma_w=Sigma_w)


def steady_kalman(model, sol, Y):
    """Constant-gain Kalman pass; returns ``(x_star, innovations)`` with ``x*_{-1} = 0``."""
    Yb, single = _batched(Y)
    N, T1, _ = Yb.shape
    A, C, K = model.A, model.C, sol.K
    x = np.zeros((N, model.n_x))
    xs = np.empty((N, T1, model.n_x))
    innov = np.empty_like(Yb)
    for k in range(T1):
        xp = x @ A.T
        I_k = Yb[:, k] - xp @ C.T
        x = xp + I_k @ K.T
        xs[:, k] = x
        innov[:, k] = I_k
    return _unbatch(single, xs, innov)


def run_stationary_pkf(model, sol, Y, seed, start=0, stream="perceptual"):
    """Stationary PKF ``x_k = A x_{k-1} + Pi K I_k + w_k`` with ``x_{-1} = 0``."""
    _, innov = steady_kalman(model, sol, Y)
    innov, single = _batched(innov)
    N, T1, _ = innov.shape
    n = model.n_x
    z = _draw(seed, stream, start, N, T1, n)
    gain = sol.Pi @ sol.K
    L = la.psd_factor(sol.Sigma_w)
    J = innov @ gain.T + z @ L.T
    est = np.empty((N, T1, n))
    x = np.zeros((N, n))
    for k in range(T1):
        x = x @ model.A.T + J[:, k]
        est[:, k] = x
    est, J = _unbatch(single, est, J)
    return FilterRun(kind=STATIONARY, estimates=est, updates=J, seed=seed, start=start)


# ---------------------------------------------------------------------------
# CSV

def write_filter_csv(run, path):
    est, single = _batched(run.estimates)
    upd, _ = _batched(run.updates)
    N, T1, n = est.shape
    header = ["traj", "k"] + [f"xhat_{i}" for i in range(n)] + [f"J_{i}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(N):
            for k in range(T1):
                w.writerow([run.start + i, k] + [repr(float(v)) for v in est[i, k]] + [repr(float(v)) for v in upd[i, k]])


def read_filter_csv(path, kind="", seed=0):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    n = sum(1 for h in header if h.startswith("xhat_"))
    traj = body[:, 0].astype(int)
    ids = np.unique(traj)
    T1 = body.shape[0] // ids.size
    est = body[:, 2:2 + n].reshape(ids.size, T1, n)
    upd = body[:, 2 + n:2 + 2 * n].reshape(ids.size, T1, n)
    if ids.size == 1:
        est, upd = est[0], upd[0]
    return FilterRun(kind=kind, estimates=est, updates=upd, seed=seed, start=int(ids[0]))
