"""Linear-Gaussian state-space models: definition, sampling and exact moments.

The model is::

    x_0 ~ N(0, P0)
    x_k = A_k x_{k-1} + q_k,   q_k ~ N(0, Q_k),   k = 1..T
    y_k = C_k x_k + r_k,       r_k ~ N(0, R_k),   k = 0..T

Per-step sequences are stored as stacked arrays of length ``T + 1``; the
unused slot 0 of ``A`` holds the identity and slot 0 of ``Q`` holds ``P0``
so that step ``k`` can always be read as ``A[k]``, ``Q[k]``.
"""

import hashlib
import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import psd_linalg as la
from .errors import DimensionMismatch, NotPSD

#: stream tag used for ground-truth process and measurement noise
TRUTH_STREAM = 0


def stream_tag(name):
    """Stable integer tag for a named noise stream."""
    return zlib.crc32(name.encode()) & 0x7FFFFFFF


def trajectory_rng(seed, index, tag=TRUTH_STREAM):
    """Philox generator for trajectory ``index`` of stream ``tag``.

    Streams are keyed by ``(seed, tag, index)`` through ``SeedSequence``, so a
    trajectory's draws do not depend on the batch it was generated in.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(tag), int(index)])))


def standard_normals(seed, tag, start, count, shape):
    """Array of shape ``(count, *shape)``; row ``i`` comes from stream ``start + i``."""
    out = np.empty((count,) + tuple(shape))
    for i in range(count):
        out[i] = trajectory_rng(seed, start + i, tag).standard_normal(shape)
    return out


def _stack(value, T, n_rows, n_cols, name, pad=None):
    """Return (array, is_constant); sequences come back with length T + 1."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0 and n_rows == n_cols == 1:
        arr = arr.reshape(1, 1)
    if arr.ndim == 1 and n_rows == 1 and arr.shape[0] == n_cols:
        arr = arr.reshape(1, n_cols)
    if arr.ndim == 2:
        if arr.shape != (n_rows, n_cols):
            raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {(n_rows, n_cols)}")
        return arr, True
    if arr.ndim == 3:
        if arr.shape[1:] != (n_rows, n_cols):
            raise DimensionMismatch(f"{name} entries have shape {arr.shape[1:]}, expected {(n_rows, n_cols)}")
        if pad is not None:
            if arr.shape[0] != T:
                raise DimensionMismatch(f"{name} needs {T} matrices (steps 1..T), got {arr.shape[0]}")
            arr = np.concatenate([pad[None], arr], axis=0)
        elif arr.shape[0] != T + 1:
            raise DimensionMismatch(f"{name} needs {T + 1} matrices (steps 0..T), got {arr.shape[0]}")
        return arr, False
    raise DimensionMismatch(f"{name} must be a matrix or a sequence of matrices")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Linear-Gaussian state-space model over the horizon ``0..T``.

    ``A``, ``C``, ``Q`` and ``R`` may each be a single matrix (constant over
    time) or a sequence: ``A`` and ``Q`` list steps ``1..T``, ``C`` and ``R``
    list steps ``0..T``. ``alpha`` weights the per-step squared error.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P0: np.ndarray
    T: int
    alpha: np.ndarray = None
    name: str = ""
    _const: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        T = int(self.T)
        if T < 0:
            raise ValueError("horizon T must be non-negative")
        P0 = np.atleast_2d(np.asarray(self.P0, dtype=float))
        n_x = P0.shape[0]
        C = np.asarray(self.C, dtype=float)
        n_y = C.shape[-2] if C.ndim >= 2 else 1
        A, a_const = _stack(self.A, T, n_x, n_x, "A", pad=np.eye(n_x))
        Q, q_const = _stack(self.Q, T, n_x, n_x, "Q", pad=P0)
        C, c_const = _stack(self.C, T, n_y, n_x, "C")
        R, r_const = _stack(self.R, T, n_y, n_y, "R")
        alpha = np.ones(T + 1) if self.alpha is None else np.asarray(self.alpha, dtype=float).reshape(-1)
        if alpha.shape != (T + 1,):
            raise DimensionMismatch(f"alpha needs {T + 1} entries, got {alpha.shape[0]}")
        if np.any(alpha < 0) or not np.any(alpha > 0):
            raise ValueError("alpha must be non-negative with at least one positive entry")
        for label, mats in (("P0", [P0]), ("Q", [Q] if q_const else Q[1:]), ("R", [R] if r_const else R)):
            for k, M in enumerate(mats):
                if not la.is_symmetric(M):
                    raise NotPSD(f"{label}[{k}] is not symmetric")
                la.psd_eigh(M)
        set_ = object.__setattr__
        set_(self, "T", T)
        set_(self, "P0", P0)
        set_(self, "A", A)
        set_(self, "Q", Q)
        set_(self, "C", C)
        set_(self, "R", R)
        set_(self, "alpha", alpha)
        set_(self, "_const", {"A": a_const, "Q": q_const, "C": c_const, "R": r_const})
        for arr in (P0, A, Q, C, R, alpha):
            arr.setflags(write=False)

    # -- shapes -----------------------------------------------------------
    @property
    def n_x(self):
        return self.P0.shape[0]

    @property
    def n_y(self):
        return self.C.shape[-2]

    @property
    def time_invariant(self):
        return all(self._const.values())

    @property
    def constant_A(self):
        return self._const["A"]

    def is_constant(self, name):
        return self._const[name]

    # -- per-step views (length T + 1) ------------------------------------
    def _seq(self, name, first=None):
        arr = getattr(self, name)
        if not self._const[name]:
            return arr
        out = np.broadcast_to(arr, (self.T + 1,) + arr.shape).copy()
        if first is not None:
            out[0] = first
        return out

    @property
    def As(self):
        return self._seq("A", first=np.eye(self.n_x))

    @property
    def Qs(self):
        """``Q_k`` for ``k = 0..T`` with ``Q_0 = P0``."""
        return self._seq("Q", first=self.P0)

    @property
    def Cs(self):
        return self._seq("C")

    @property
    def Rs(self):
        return self._seq("R")

    def A_at(self, k):
        return self.A if self._const["A"] else self.A[k]

    def Q_at(self, k):
        if k == 0:
            return self.P0
        return self.Q if self._const["Q"] else self.Q[k]

    def C_at(self, k):
        return self.C if self._const["C"] else self.C[k]

    def R_at(self, k):
        return self.R if self._const["R"] else self.R[k]

    def with_alpha(self, alpha):
        """Same dynamics with different error weights."""
        return ModelSpec(A=self._raw("A"), C=self._raw("C"), Q=self._raw("Q"), R=self._raw("R"),
                         P0=self.P0, T=self.T, alpha=alpha, name=self.name)

    def _raw(self, name):
        arr = getattr(self, name)
        if self._const[name] or name in ("C", "R"):
            return arr
        return arr[1:]

    def to_dict(self):
        def enc(name):
            return self._raw(name).tolist()

        return {
            "name": self.name,
            "time_invariant": self.time_invariant,
            "n_x": self.n_x,
            "n_y": self.n_y,
            "T": self.T,
            "A": enc("A"),
            "C": enc("C"),
            "Q": enc("Q"),
            "R": enc("R"),
            "P0": self.P0.tolist(),
            "alpha": self.alpha.tolist(),
        }

    def digest(self):
        """SHA-256 of the model's canonical JSON form (name excluded)."""
        data = self.to_dict()
        data.pop("name")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ground-truth states and measurements.

    Arrays have shape ``(T + 1, n)`` for a single trajectory or
    ``(N, T + 1, n)`` for a batch.
    """

    states: np.ndarray
    measurements: np.ndarray
    seed: int
    start: int = 0

    def __len__(self):
        return self.states.shape[-2]


def sample_batch(model, count, seed, start=0):
    """Sample ``count`` independent trajectories (streams ``start .. start+count-1``)."""
    n_x, n_y, T = model.n_x, model.n_y, model.T
    z = standard_normals(seed, TRUTH_STREAM, start, count, (T + 1, n_x + n_y))
    X = np.empty((count, T + 1, n_x))
    Y = np.empty((count, T + 1, n_y))
    As, Cs = model.As, model.Cs
    q_fac = [la.psd_factor(model.Q_at(k)) for k in range(T + 1)] if not model.is_constant("Q") else None
    r_fac = [la.psd_factor(model.R_at(k)) for k in range(T + 1)] if not model.is_constant("R") else None
    q_const = la.psd_factor(model.Q) if q_fac is None else None
    r_const = la.psd_factor(model.R) if r_fac is None else None
    L0 = la.psd_factor(model.P0)
    for k in range(T + 1):
        if k == 0:
            x = z[:, 0, :n_x] @ L0.T
        else:
            Lq = q_fac[k] if q_fac is not None else q_const
            x = x @ As[k].T + z[:, k, :n_x] @ Lq.T
        Lr = r_fac[k] if r_fac is not None else r_const
        X[:, k] = x
        Y[:, k] = x @ Cs[k].T + z[:, k, n_x:] @ Lr.T
    return Trajectory(states=X, measurements=Y, seed=seed, start=start)


def sample_trajectory(model, seed, index=0):
    """One trajectory, drawn from stream ``index`` of ``seed``."""
    batch = sample_batch(model, 1, seed, start=index)
    return Trajectory(states=batch.states[0], measurements=batch.measurements[0], seed=seed, start=index)


def state_covariances(model):
    """Exact ``Cov(x_k)`` for ``k = 0..T`` as a ``(T + 1, n, n)`` array."""
    out = np.empty((model.T + 1, model.n_x, model.n_x))
    out[0] = model.P0
    for k in range(1, model.T + 1):
        A = model.A_at(k)
        out[k] = la.symmetrize(A @ out[k - 1] @ A.T + model.Q_at(k))
    return out


def state_covariance(model, k):
    if not 0 <= k <= model.T:
        raise IndexError(f"step {k} outside 0..{model.T}")
    return state_covariances(model)[k]


def windowed_state_covariance(model, k, w, covs=None):
    """Covariance of the stacked vector ``(x_{k-w+1}, ..., x_k)``."""
    if w < 1 or k < w - 1 or k > model.T:
        raise IndexError(f"window of length {w} ending at {k} is outside 0..{model.T}")
    if covs is None:
        covs = state_covariances(model)
    n = model.n_x
    first = k - w + 1
    out = np.empty((w * n, w * n))
    for j in range(w):
        block = covs[first + j]
        out[j * n:(j + 1) * n, j * n:(j + 1) * n] = block
        for i in range(j + 1, w):
            # Cov(x_i, x_j) = A_i ... A_{j+1} Sigma_j for i > j
            block = model.A_at(first + i) @ block
            out[i * n:(i + 1) * n, j * n:(j + 1) * n] = block
            out[j * n:(j + 1) * n, i * n:(i + 1) * n] = block.T
    return out
