"""Offline computation of perceptual filter coefficients.

Three solvers of increasing generality:

* :func:`solve_pkf` - closed-form per-step gains (innovation only, ``Phi = 0``);
* :func:`optimize_recursive` - gradient descent over ``(Pi_k, Phi_k)`` of the
  recursive form, keeping every iterate feasible by radial scaling;
* :func:`direct_oracle` - the convex program over full causal linear filters,
  solved by a log-det barrier method; usable only at desk scale.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import psd_linalg as la
from .errors import NoConvergence, NoImprovement, ScaleExceeded
from .filters import pkf_schedule, recursive_schedule
from .kalman import kalman_gains
from .perceptual_gain import pkf_gain

TOTAL = "total"
TERMINAL = "terminal"
WEIGHTED = "weighted"

#: largest ``n_x * (T + 1)`` accepted by the direct oracle
DIRECT_MAX_DIM = 16


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which weighted sum of per-step MSEs to minimize."""

    kind: str = TOTAL
    weights: tuple = None

    def __post_init__(self):
        if self.kind not in (TOTAL, TERMINAL, WEIGHTED):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == WEIGHTED:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or np.any(w < 0) or not np.any(w > 0):
                raise ValueError("weights must be non-negative with at least one positive entry")

    def alpha(self, T):
        if self.kind == TOTAL:
            return np.ones(T + 1)
        if self.kind == TERMINAL:
            a = np.zeros(T + 1)
            a[T] = 1.0
            return a
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (T + 1,):
            raise ValueError(f"weights need {T + 1} entries, got {w.shape[0]}")
        return w


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 400
    step_size: float = 1.0
    shrink_tolerance: float = 1e-12
    convergence_tol: float = 1e-10
    restarts: int = 8
    seed: int = 0
    init_scale: float = 0.1
    momentum: float = 0.5

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be positive")
        if self.step_size <= 0 or self.shrink_tolerance <= 0 or self.convergence_tol <= 0:
            raise ValueError("step_size and tolerances must be positive")


def _alpha(model, objective):
    return model.alpha if objective is None else objective.alpha(model.T)


def backward_weights(model, alpha):
    """``B_k = alpha_k I + A_{k+1}^T B_{k+1} A_{k+1}`` with ``B_{T+1} = 0``.

    Allows time-varying ``A``; for constant ``A`` this equals
    :func:`perceptual_gain.weight_matrices`.
    """
    n, T = model.n_x, model.T
    B = np.empty((T + 1, n, n))
    nxt = np.zeros((n, n))
    for k in range(T, -1, -1):
        if k < T:
            A = model.A_at(k + 1)
            nxt = A.T @ nxt @ A
        nxt = la.symmetrize(alpha[k] * np.eye(n) + nxt)
        B[k] = nxt
    return B


# ---------------------------------------------------------------------------
# closed-form PKF

def solve_pkf(model, kgains=None, objective=None, label=""):
    """Per-step closed-form gains ``Pi_k = pkf_gain(Q_k, M_k, B_k)``."""
    if kgains is None:
        kgains = kalman_gains(model)
    alpha = _alpha(model, objective)
    B = backward_weights(model, alpha)
    Pi = np.empty((model.T + 1, model.n_x, model.n_x))
    value = 0.0
    with warnings.catch_warnings():
        # Steps with nothing to inject (e.g. Q_k = 0) legitimately violate the image condition.
        warnings.simplefilter("ignore")
        for k in range(model.T + 1):
            res = pkf_gain(model.Q_at(k), kgains.M[k], B[k])
            Pi[k] = res.Pi
    value = _objective_from_gains(model, kgains, B, Pi, np.zeros_like(Pi))
    return pkf_schedule(model, kgains, Pi, label=label, objective_value=value)


def _objective_from_gains(model, kgains, B, Pi, Phi):
    ctx = _Context(model, kgains, B)
    return float(ctx.forward(Pi[None].copy(), Phi[None].copy(), project=False)[0][0])


# ---------------------------------------------------------------------------
# recursive-form optimization

class _Context:
    """Per-step constants shared by every restart."""

    def __init__(self, model, kgains, B):
        self.T = model.T
        self.n = model.n_x
        self.A = model.As
        self.Q = model.Qs
        self.M = kgains.M
        self.B = B
        self.Qpinv = np.array([la.pinv_psd(Q) for Q in self.Q])
        self.Qhalf_pinv = np.array([la.sqrt_and_pinv_sqrt(Q)[1] for Q in self.Q])
        self.Qperp = np.array([np.eye(self.n) - Q @ Qp for Q, Qp in zip(self.Q, self.Qpinv)])
        self.Qnorm = np.array([max(np.linalg.norm(Q, 2), 1e-300) for Q in self.Q])
        # constant part of sum_k tr(B_k E_k)
        self.const = float(sum(np.trace(B[k] @ (self.Q[k] + self.M[k])) for k in range(self.T + 1)))

    def radial_scale(self, k, X, shrink_tol):
        """Largest ``c`` in ``[0, 1]`` with ``Q_k - c^2 X >= 0`` for each stacked ``X``."""
        Q, Qh = self.Q[k], self.Qhalf_pinv[k]
        xnorm = np.linalg.norm(X, axis=(1, 2))
        outside = np.linalg.norm(self.Qperp[k] @ X @ self.Qperp[k], axis=(1, 2))
        lam = np.linalg.eigvalsh(la.symmetrize(Qh @ X @ Qh))[:, -1]
        with np.errstate(divide="ignore"):
            cand = np.where(lam > 1.0, 1.0 / np.sqrt(np.maximum(lam, 1e-300)), 1.0)
        c = np.where(outside > 1e-12 * np.maximum(xnorm, 1e-300), 0.0, cand * (1.0 - 1e-12))
        lo_eig = np.linalg.eigvalsh(Q - c[:, None, None] ** 2 * X)[:, 0]
        for r in np.flatnonzero(lo_eig < -1e-10 * self.Qnorm[k]):
            # closed-form bound missed (rank issues); bisect on c
            lo, hi = 0.0, c[r]
            while hi - lo > shrink_tol:
                mid = 0.5 * (lo + hi)
                if la.min_eig(Q - mid ** 2 * X[r]) >= 0.0:
                    lo = mid
                else:
                    hi = mid
            c[r] = lo
        return c

    def forward(self, Pi, Phi, project=True, shrink_tol=1e-12):
        """Objective ``sum_k tr(B_k E_k)`` for stacked coefficient sets.

        With ``project`` the coefficients are scaled in place, step by step,
        so that every noise covariance is PSD. Returns the objective per
        restart together with the per-step ``G`` and ``Psi`` for the adjoint.
        """
        R = Pi.shape[0]
        n, T = self.n, self.T
        SU = np.zeros((R, n, n))
        G = np.zeros((T + 1, R, n, n))
        Psi = np.zeros((T + 1, R, n, n))
        f = np.full(R, self.const)
        for k in range(T + 1):
            A, M, B = self.A[k], self.M[k], self.B[k]
            if k > 0:
                G[k] = A @ SU @ A.T
            Gk = G[k]
            P, F = Pi[:, k], Phi[:, k]
            if project:
                X = F @ Gk @ F.transpose(0, 2, 1) + P @ M @ P.transpose(0, 2, 1)
                c = self.radial_scale(k, X, shrink_tol)
                P *= c[:, None, None]
                F *= c[:, None, None]
            Psi[k] = M @ P.transpose(0, 2, 1) + Gk @ F.transpose(0, 2, 1)
            SU = Gk + M - Psi[k] @ self.Qpinv[k] @ Psi[k].transpose(0, 2, 1)
            SU = 0.5 * (SU + SU.transpose(0, 2, 1))
            f -= 2.0 * (np.einsum("ij,rji->r", B, P @ M) + np.einsum("ij,rji->r", B, F @ Gk))
        return f, G, Psi

    def gradient(self, Pi, Phi, G, Psi):
        """Adjoint gradient of the objective with respect to ``Pi`` and ``Phi``."""
        R = Pi.shape[0]
        gPi = np.zeros_like(Pi)
        gPhi = np.zeros_like(Phi)
        Lam = np.zeros((R, self.n, self.n))  # d objective / d Sigma_Ups_{k+1}
        for k in range(self.T, -1, -1):
            A, M, B = self.A[k], self.M[k], self.B[k]
            P, F, Gk = Pi[:, k], Phi[:, k], G[k]
            LPQ = Lam @ Psi[k] @ self.Qpinv[k]
            LPQt = LPQ.transpose(0, 2, 1)
            gPi[:, k] = -2.0 * B @ M - 2.0 * LPQt @ M
            gPhi[:, k] = -2.0 * B @ Gk - 2.0 * LPQt @ Gk
            if k == 0:
                break
            LF = LPQ @ F
            Gam = -(F.transpose(0, 2, 1) @ B + B @ F) + Lam - (LF + LF.transpose(0, 2, 1))
            Lam = A.T @ Gam @ A
        return gPi, gPhi


def recursive_objective(model, kgains, alpha, Pi, Phi):
    """``sum_k alpha_k tr(D_k)`` for a recursive-form schedule (no projection)."""
    B = backward_weights(model, alpha)
    return _objective_from_gains(model, kgains, B, np.asarray(Pi, float), np.asarray(Phi, float))


def recursive_gradient(model, kgains, alpha, Pi, Phi):
    """Objective and its gradient with respect to ``(Pi, Phi)``."""
    ctx = _Context(model, kgains, backward_weights(model, alpha))
    P, F = np.asarray(Pi, float)[None].copy(), np.asarray(Phi, float)[None].copy()
    f, G, Psi = ctx.forward(P, F, project=False)
    gPi, gPhi = ctx.gradient(P, F, G, Psi)
    return float(f[0]), gPi[0], gPhi[0]


def _initial_points(model, pkf_Pi, opts):
    R, T1, n = opts.restarts, model.T + 1, model.n_x
    Pi = np.repeat(pkf_Pi[None], R, axis=0)
    Phi = np.zeros((R, T1, n, n))
    for r in range(1, R):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([opts.seed, r])))
        Pi[r] *= rng.uniform(0.5, 1.0)
        Phi[r, 1:] = opts.init_scale * rng.standard_normal((T1 - 1, n, n))
    return Pi, Phi


def optimize_recursive(model, kgains=None, objective=None, opts=None, label=""):
    """Minimize ``sum_k alpha_k tr(D_k)`` over recursive-form coefficients.

    Restart 0 starts from the closed-form PKF (``Phi = 0``); the rest start
    from perturbed copies. Each restart runs gradient descent with an
    adaptive step: a step is kept only if it lowers the objective after the
    radial feasibility scaling, so restart 0 never ends above the PKF.
    Emits :class:`NoImprovement` when no restart beats the PKF.
    """
    if kgains is None:
        kgains = kalman_gains(model)
    opts = opts or OptimizerOptions()
    alpha = _alpha(model, objective)
    B = backward_weights(model, alpha)
    ctx = _Context(model, kgains, B)
    pkf = solve_pkf(model, kgains, objective)
    Pi, Phi = _initial_points(model, pkf.Pi, opts)
    f, G, Psi = ctx.forward(Pi, Phi, shrink_tol=opts.shrink_tolerance)
    scale = max(abs(pkf.objective_value), 1e-300)
    eta = np.full(opts.restarts, opts.step_size / scale)
    active = np.ones(opts.restarts, dtype=bool)
    stall = np.zeros(opts.restarts, dtype=int)
    vPi, vPhi = np.zeros_like(Pi), np.zeros_like(Phi)
    for _ in range(opts.max_iters):
        if not active.any():
            break
        gPi, gPhi = ctx.gradient(Pi, Phi, G, Psi)
        e = eta[:, None, None, None]
        vPi, vPhi = opts.momentum * vPi - e * gPi, opts.momentum * vPhi - e * gPhi
        tPi, tPhi = Pi + vPi, Phi + vPhi
        tPhi[:, 0] = 0.0
        tf, tG, tPsi = ctx.forward(tPi, tPhi, shrink_tol=opts.shrink_tolerance)
        better = (tf < f) & active
        Pi_old, Phi_old = Pi.copy(), Phi.copy()
        gain = np.where(better, (f - tf) / np.maximum(np.abs(f), 1e-300), 0.0)
        Pi[better], Phi[better], f[better] = tPi[better], tPhi[better], tf[better]
        G[:, better], Psi[:, better] = tG[:, better], tPsi[:, better]
        eta = np.where(better, eta * 1.5, eta * 0.5)
        # the projected step may differ from the proposal; keep the realized one
        vPi = np.where(better[:, None, None, None], tPi - Pi_old, 0.0)
        vPhi = np.where(better[:, None, None, None], tPhi - Phi_old, 0.0)
        stall = np.where(better & (gain > opts.convergence_tol), 0, stall + 1)
        active &= (stall < 20) & (eta * scale > 1e-14)
    best = int(np.argmin(f))
    info = {"restart": best, "objective": float(f[best]), "pkf_objective": pkf.objective_value,
            "improved": bool(f[best] < pkf.objective_value)}
    if not info["improved"]:
        warnings.warn("no feasible descent from the PKF schedule", NoImprovement, stacklevel=2)
        return recursive_schedule(model, kgains, pkf.Pi, np.zeros_like(pkf.Pi), label=label,
                                  objective_value=pkf.objective_value, info=info)
    return recursive_schedule(model, kgains, Pi[best], Phi[best], label=label, objective_value=float(f[best]),
                              info=info)


# ---------------------------------------------------------------------------
# direct oracle

@dataclass(frozen=True, eq=False)
class DirectResult:
    """Optimum of ``2 tr(Phi S K^T B)`` over causal linear filters.

    ``Phi`` maps the stacked innovations to the stacked updates; ``cost`` is
    the weighted MSE ``sum alpha_k E||x_k - x_hat_k||^2`` it attains.
    """

    value: float
    Phi: np.ndarray
    cost: float
    constraint_min_eig: float
    info: dict = field(default_factory=dict)


def _stack_operators(model, kgains, alpha):
    n, m, T1 = model.n_x, model.n_y, model.T + 1
    AJ = np.zeros((n * T1, n * T1))
    for j in range(T1):
        block = np.eye(n)
        for i in range(j, T1):
            if i > j:
                block = model.A_at(i) @ block
            AJ[i * n:(i + 1) * n, j * n:(j + 1) * n] = block
    W = np.kron(np.diag(alpha), np.eye(n))
    Bfull = AJ.T @ W @ AJ
    Qfull = np.zeros((n * T1, n * T1))
    Sfull = np.zeros((m * T1, m * T1))
    Kfull = np.zeros((n * T1, m * T1))
    for k in range(T1):
        Qfull[k * n:(k + 1) * n, k * n:(k + 1) * n] = model.Q_at(k)
        Sfull[k * m:(k + 1) * m, k * m:(k + 1) * m] = kgains.S[k]
        Kfull[k * n:(k + 1) * n, k * m:(k + 1) * m] = kgains.K[k]
    mask = np.kron(np.tril(np.ones((T1, T1))), np.ones((n, m))).astype(bool)
    return Bfull, Qfull, Sfull, Kfull, mask


def _barrier_newton(Gmat, mask, mu, Y, max_inner=60):
    """Maximize ``<G, Y> + mu log det(I - Y Y^T)`` over ``Y`` supported on ``mask``."""
    idx = np.flatnonzero(mask)
    p = idx.size
    d = Y.shape[0]
    eye = np.eye(d)

    def value(Yc):
        ok, logdet = np.linalg.slogdet(eye - Yc @ Yc.T)
        if ok <= 0 or np.linalg.norm(Yc, 2) >= 1.0:
            return -np.inf
        return float(np.sum(Gmat * Yc) + mu * logdet)

    f = value(Y)
    for _ in range(max_inner):
        W = np.linalg.inv(eye - Y @ Y.T)
        grad = (Gmat - 2.0 * mu * W @ Y).reshape(-1)[idx]
        H = np.empty((p, p))
        for c, flat in enumerate(idx):
            E = np.zeros_like(Y).reshape(-1)
            E[flat] = 1.0
            E = E.reshape(Y.shape)
            dW = W @ (E @ Y.T + Y @ E.T) @ W
            H[:, c] = (-2.0 * mu * (dW @ Y + W @ E)).reshape(-1)[idx]
        H = 0.5 * (H + H.T)
        # H is negative definite: the ascent direction is -H^{-1} grad
        step = np.linalg.solve(H - 1e-14 * np.eye(p), -grad)
        decrement = float(grad @ step)
        if decrement < 1e-13:
            break
        t = 1.0
        while t > 1e-12:
            cand = Y.copy().reshape(-1)
            cand[idx] += t * step
            cand = cand.reshape(Y.shape)
            fc = value(cand)
            if fc >= f + 0.25 * t * decrement:
                break
            t *= 0.5
        else:
            break
        Y, f = cand, fc
    return Y


def direct_oracle(model, objective=None, opts=None, kgains=None, outer_iters=30):
    """Best causal linear perfect-perception filter by a log-det barrier method.

    Substituting ``Phi S^{1/2} = Q^{1/2} Y`` turns the block constraint into
    ``||Y||_2 <= 1`` and the objective into ``2 <G, Y>`` with
    ``G = Q^{1/2} B K S^{1/2}``. The barrier weight starts at ``||G||`` and
    halves ``outer_iters`` times; inner problems are solved by damped Newton.
    """
    n, T1 = model.n_x, model.T + 1
    if n * T1 > DIRECT_MAX_DIM:
        raise ScaleExceeded(f"direct oracle limited to n_x*(T+1) <= {DIRECT_MAX_DIM}, got {n * T1}")
    if kgains is None:
        kgains = kalman_gains(model)
    alpha = _alpha(model, objective)
    Bfull, Qfull, Sfull, Kfull, mask = _stack_operators(model, kgains, alpha)
    Qh, _ = la.sqrt_and_pinv_sqrt(Qfull)
    Sh, Sh_pinv = la.sqrt_and_pinv_sqrt(Sfull)
    Gmat = Qh @ Bfull @ Kfull @ Sh
    Gmat = np.where(mask, Gmat, 0.0)
    d_star = float(np.dot(alpha, kgains.mmse()))
    base = d_star + float(np.trace(Bfull @ Qfull) + np.trace(Bfull @ Kfull @ Sfull @ Kfull.T))
    gnorm = np.linalg.norm(Gmat, 2)
    Y = np.zeros_like(Gmat)
    if gnorm > 0:
        mu = gnorm
        for _ in range(outer_iters):
            Y = _barrier_newton(Gmat, mask, mu, Y)
            mu *= 0.5
    Phi = np.where(mask, Qh @ Y @ Sh_pinv, 0.0)
    blockm = np.block([[Qfull, Phi @ Sfull], [Sfull @ Phi.T, Sfull]])
    min_eig = la.min_eig(la.symmetrize(blockm))
    scale = max(np.linalg.norm(blockm, 2), 1.0)
    if min_eig < -1e-8 * scale:
        raise NoConvergence(f"direct oracle iterate violates the constraint (min eig {min_eig:.3e})")
    value = 2.0 * float(np.trace(Phi @ Sfull @ Kfull.T @ Bfull))
    return DirectResult(value=value, Phi=Phi, cost=base - value, constraint_min_eig=min_eig,
                        info={"barrier_final": gnorm * 0.5 ** outer_iters})


# ---------------------------------------------------------------------------
# random-search certificate

def per_step_search(Q, M, B, n_samples, seed):
    """Best ``tr(Pi M B)`` over random directions scaled onto the feasible set."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = Q.shape[0]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed)])))
    best = 0.0
    Qp = la.pinv_psd(Q)
    _, Qh = la.sqrt_and_pinv_sqrt(Q)
    perp = np.eye(n) - Q @ Qp
    done = 0
    while done < n_samples:
        size = min(4096, n_samples - done)
        Pi = rng.standard_normal((size, n, n))
        X = Pi @ M @ Pi.transpose(0, 2, 1)
        lam = np.linalg.eigvalsh(la.symmetrize(Qh @ X @ Qh))[:, -1]
        xnorm = np.linalg.norm(X, axis=(1, 2))
        outside = np.linalg.norm(perp @ X @ perp, axis=(1, 2)) > 1e-12 * np.maximum(xnorm, 1e-300)
        with np.errstate(divide="ignore"):
            c = np.where(lam > 0, 1.0 / np.sqrt(np.maximum(lam, 1e-300)), 0.0) * (1.0 - 1e-12)
        c[outside] = 0.0
        vals = np.abs(np.einsum("rij,ji->r", Pi @ M, B)) * c
        best = max(best, float(vals.max(initial=0.0)))
        done += size
    return best
