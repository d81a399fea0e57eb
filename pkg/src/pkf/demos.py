"""Built-in demo models with their published constants."""

import numpy as np

from .errors import UnknownDemo
from .lgssm import ModelSpec

HO_DT = 5e-3
PEND_DT = 5e-4


def harmonic_oscillator(T=255, alpha=None):
    """Position/velocity oscillator observed through a half-step-delayed position.

    The default error weights select the terminal error at ``k = T``.
    """
    if alpha is None:
        alpha = np.zeros(T + 1)
        alpha[T] = 1.0
    A = np.eye(2) + np.array([[0.0, 1.0], [-2.0, 0.0]]) * HO_DT
    return ModelSpec(A=A, C=np.array([[1.0, -0.5]]), Q=np.eye(2), R=np.eye(1), P0=0.8 * np.eye(2),
                     T=T, alpha=alpha, name="harmonic-oscillator")


# Single cart/pendulum open-loop dynamics (position, velocity, angle, angular velocity).
PEND_A1 = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [2.9156, 0.0, -0.0005, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [-1.6663, 0.0, 0.0002, 0.0],
])
PEND_B = np.array([[0.0], [-0.0042], [0.0], [0.0167]])
# Inter-cart coupling. The published entry "0,0.0005" is read as 0.0005.
PEND_F = np.array([
    [0.0, 0.0, 0.0, 0.0],
    [0.0011, 0.0, 0.0005, 0.0],
    [0.0, 0.0, 0.0, 0.0],
    [-0.0003, 0.0, -0.0002, 0.0],
])
# Stabilizing state-feedback gains, one per cart.
PEND_K1 = np.array([[11396.0, 7196.2, 573.96, 1199.0]])
PEND_K2 = np.array([[29241.0, 18135.0, 2875.3, 3693.9]])
# Each cart measures its position and angle.
PEND_CBAR = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
PEND_P0BAR = np.array([
    [0.154, 0.142, -0.143, 0.093],
    [0.142, 0.144, -0.124, 0.058],
    [-0.143, -0.124, 0.167, -0.148],
    [0.093, 0.058, -0.148, 0.192],
]) * 5e-4
PEND_QBAR = 1e-2 * np.array([
    [0.642, -0.136, 0.78, 0.262],
    [-0.136, 0.894, -0.248, 0.074],
    [0.78, -0.248, 1.284, -0.314],
    [0.262, 0.074, -0.314, 1.766],
]) * PEND_DT
PEND_RBAR = 1e-2 * np.array([[0.375, -0.33], [-0.33, 0.771]]) * PEND_DT


def _blockdiag(a, b):
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
    out[:a.shape[0], :a.shape[1]] = a
    out[a.shape[0]:, a.shape[1]:] = b
    return out


def pendulum_closed_loop():
    """Continuous-time closed-loop matrix of the two coupled carts."""
    top = np.hstack([PEND_A1 + PEND_B @ PEND_K1, PEND_F])
    bottom = np.hstack([PEND_F, PEND_A1 + PEND_B @ PEND_K2])
    return np.vstack([top, bottom])


def pendulums(T=1023, alpha=None):
    """Two coupled inverted pendulums on carts, 8-dimensional state."""
    A = np.eye(8) + pendulum_closed_loop() * PEND_DT
    C = _blockdiag(PEND_CBAR, PEND_CBAR)
    R = np.block([[PEND_RBAR, PEND_RBAR / 8.0], [PEND_RBAR / 8.0, PEND_RBAR]])
    return ModelSpec(A=A, C=C, Q=_blockdiag(PEND_QBAR, PEND_QBAR), R=R, P0=_blockdiag(PEND_P0BAR, PEND_P0BAR),
                     T=T, alpha=alpha, name="pendulums")


def example1(alpha=(0.0, 1.0)):
    """Two-step scalar model: nothing observed at step 0, a frozen state seen exactly at step 1."""
    return ModelSpec(A=np.eye(1), C=np.zeros((2, 1, 1)) + np.array([0.0, 1.0])[:, None, None],
                     Q=np.zeros((1, 1)), R=np.zeros((1, 1)), P0=np.eye(1), T=1, alpha=alpha, name="example1")


DEMOS = {
    "harmonic-oscillator": harmonic_oscillator,
    "pendulums": pendulums,
    "example1": example1,
}

#: trajectory counts used by the demos when none is given
DEFAULT_N = {"harmonic-oscillator": 1024, "pendulums": 1024, "example1": 100_000}


def get_demo(name, **kwargs):
    try:
        factory = DEMOS[name]
    except KeyError:
        raise UnknownDemo(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}") from None
    return factory(**kwargs)
