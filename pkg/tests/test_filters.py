import warnings

import numpy as np
import pytest

from pkf import psd_linalg as la
from pkf.analytics import analytic_mse
from pkf.demos import example1, harmonic_oscillator
from pkf.errors import InfeasibleSchedule, UnstableA
from pkf.filters import (GainSchedule, dare_solve, lyapunov_solve, noise_cov, pkf_schedule, read_filter_csv,
                         recursive_quantities, run_pkf, run_recursive_filter, run_stationary_pkf, run_tic_filter,
                         stationary_pkf, tic_mse_closed_form, write_filter_csv)
from pkf.kalman import kalman_filter, kalman_gains
from pkf.lgssm import ModelSpec, sample_batch, state_covariances
from pkf.optimizer import ObjectiveSpec, OptimizerOptions, TERMINAL, optimize_recursive, solve_pkf


def mse_and_se(est, X):
    err = ((est - X) ** 2).sum(axis=-1)
    return err.mean(axis=0), err.std(axis=0, ddof=1) / np.sqrt(err.shape[0])


def blind(T=6):
    return ModelSpec(A=harmonic_oscillator().A, C=np.zeros((1, 2)), Q=np.eye(2), R=np.eye(1), P0=np.eye(2), T=T)


@pytest.fixture(scope="module")
def ho_short():
    return harmonic_oscillator(T=40)


@pytest.fixture(scope="module")
def ho_short_rec(ho_short):
    g = kalman_gains(ho_short)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sched = optimize_recursive(ho_short, g, None, OptimizerOptions(max_iters=150, restarts=2))
    return g, sched


# -- temporally-inconsistent filter ------------------------------------------

def test_tic_without_observations_draws_fresh_prior_samples():
    m = blind()
    g = kalman_gains(m)
    N = 20_000
    tr = sample_batch(m, N, seed=1)
    run = run_tic_filter(m, kalman_filter(m, tr.measurements, g), seed=1)
    covs = state_covariances(m)
    est = run.estimates
    for k in (0, 3, 6):
        S = est[:, k].T @ est[:, k] / N
        assert np.allclose(S, covs[k], atol=5 * np.abs(covs[k]).max() / np.sqrt(N) * 2)
    cross = est[:, 2].T @ est[:, 5] / N
    assert np.abs(cross).max() <= 5 * np.sqrt(np.abs(covs[2]).max() * np.abs(covs[5]).max() / N)


def test_tic_with_perfect_observation_returns_measurements():
    m = ModelSpec(A=np.array([[1.0, 0.1], [0.0, 1.0]]), C=np.eye(2), Q=np.eye(2), R=np.zeros((2, 2)),
                  P0=np.eye(2), T=5)
    g = kalman_gains(m)
    Y = sample_batch(m, 3, seed=0).measurements
    run = run_tic_filter(m, kalman_filter(m, Y, g), seed=0)
    assert np.allclose(run.estimates, Y, atol=1e-8)


def test_tic_closed_form_examples():
    m = blind()
    g = kalman_gains(m)
    covs = state_covariances(m)
    assert np.allclose(tic_mse_closed_form(m, g), 2 * np.trace(covs, axis1=1, axis2=2))
    # a perfect estimator marginal leaves only the MMSE term
    m2 = ModelSpec(A=[[1.0]], C=[[1.0]], Q=[[1.0]], R=[[0.0]], P0=[[1.0]], T=3)
    g2 = kalman_gains(m2)
    assert np.allclose(tic_mse_closed_form(m2, g2), g2.mmse())


def test_tic_matches_closed_form_on_oscillator(ho, ho_gains):
    tr = sample_batch(ho, 10_000, seed=3)
    run = run_tic_filter(ho, kalman_filter(ho, tr.measurements, ho_gains), seed=3)
    mean, se = mse_and_se(run.estimates, tr.states)
    ref = tic_mse_closed_form(ho, ho_gains)
    z = np.abs(mean - ref) / se
    assert z[50] <= 3
    assert z.max() <= 4.5


# -- PKF ---------------------------------------------------------------------

def test_zero_gain_pkf_is_a_prior_draw(ho_short):
    g = kalman_gains(ho_short)
    sched = pkf_schedule(ho_short, g, np.zeros((ho_short.T + 1, 2, 2)))
    N = 20_000
    tr = sample_batch(ho_short, N, seed=2)
    run = run_pkf(ho_short, g, tr.measurements, sched, seed=2)
    covs = state_covariances(ho_short)
    S = run.estimates[:, -1].T @ run.estimates[:, -1] / N
    assert np.allclose(S, covs[-1], rtol=0.05, atol=0.05 * np.abs(covs[-1]).max())
    # independent of the measurements
    c = np.corrcoef(run.estimates[:, -1, 0], tr.measurements[:, -1, 0])[0, 1]
    assert abs(c) <= 4 / np.sqrt(N)


def test_example1_pkf_behaviour():
    m = example1()
    g = kalman_gains(m)
    sched = solve_pkf(m, g)
    N = 100_000
    tr = sample_batch(m, N, seed=0)
    run = run_pkf(m, g, tr.measurements, sched, seed=0)
    assert np.array_equal(run.estimates[:, 1], run.estimates[:, 0])
    assert run.estimates[:, 0, 0].var() == pytest.approx(1.0, abs=0.02)
    mean, se = mse_and_se(run.estimates, tr.states)
    assert abs(mean[1] - 2.0) <= 3 * se[1]


def test_pkf_matches_analytic_mse(ho, ho_gains):
    sched = solve_pkf(ho, ho_gains, ObjectiveSpec(TERMINAL))
    tr = sample_batch(ho, 10_000, seed=6)
    run = run_pkf(ho, ho_gains, tr.measurements, sched, seed=6)
    mean, se = mse_and_se(run.estimates, tr.states)
    ref = analytic_mse(ho, ho_gains, sched)
    assert (np.abs(mean - ref) / se).max() <= 4.5


def test_filter_template_holds_exactly(ho, ho_gains):
    sched = solve_pkf(ho, ho_gains)
    tr = sample_batch(ho, 4, seed=1)
    run = run_pkf(ho, ho_gains, tr.measurements, sched, seed=1)
    x, J = run.estimates, run.updates
    assert np.array_equal(x[:, 0], J[:, 0])
    for k in range(1, ho.T + 1):
        assert np.allclose(x[:, k], x[:, k - 1] @ ho.A.T + J[:, k], rtol=0, atol=1e-12)


def test_orthogonality_decomposition(ho, ho_gains):
    sched = solve_pkf(ho, ho_gains)
    tr = sample_batch(ho, 10_000, seed=12)
    kr = kalman_filter(ho, tr.measurements, ho_gains)
    run = run_pkf(ho, ho_gains, None, sched, seed=12, krun=kr)
    total, se = mse_and_se(run.estimates, tr.states)
    gap = ((run.estimates - kr.x_star) ** 2).sum(axis=-1).mean(axis=0)
    assert (np.abs(total - (ho_gains.mmse() + gap)) / se).max() <= 4.5


def test_single_trajectory_matches_batch_entry(ho, ho_gains):
    sched = solve_pkf(ho, ho_gains)
    tr = sample_batch(ho, 3, seed=5)
    batch = run_pkf(ho, ho_gains, tr.measurements, sched, seed=5)
    one = run_pkf(ho, ho_gains, tr.measurements[2], sched, seed=5, start=2)
    assert np.allclose(batch.estimates[2], one.estimates, rtol=1e-12, atol=1e-12)


# -- recursive form ----------------------------------------------------------

def test_recursive_with_zero_phi_equals_pkf(ho, ho_gains):
    pk = solve_pkf(ho, ho_gains)
    from pkf.filters import recursive_schedule
    rec = recursive_schedule(ho, ho_gains, pk.Pi, np.zeros_like(pk.Pi))
    tr = sample_batch(ho, 5, seed=9)
    a = run_pkf(ho, ho_gains, tr.measurements, pk, seed=9)
    b = run_recursive_filter(ho, ho_gains, tr.measurements, rec, seed=9)
    assert np.allclose(a.estimates, b.estimates, rtol=0, atol=1e-12)


def test_recursive_with_zero_coefficients_is_prior_draw(ho_short):
    from pkf.filters import recursive_schedule
    g = kalman_gains(ho_short)
    Z = np.zeros((ho_short.T + 1, 2, 2))
    rec = recursive_schedule(ho_short, g, Z, Z)
    assert np.allclose(rec.Sigma_w, ho_short.Qs)
    N = 20_000
    tr = sample_batch(ho_short, N, seed=4)
    run = run_recursive_filter(ho_short, g, tr.measurements, rec, seed=4)
    S = run.estimates[:, -1].T @ run.estimates[:, -1] / N
    covs = state_covariances(ho_short)
    assert np.allclose(S, covs[-1], rtol=0.05, atol=0.05 * np.abs(covs[-1]).max())


def test_unutilized_information_covariance_and_independence(ho_short, ho_short_rec):
    g, sched = ho_short_rec
    assert np.abs(sched.Phi).max() > 0
    N = 100_000
    tr = sample_batch(ho_short, N, seed=13)
    run = run_recursive_filter(ho_short, g, tr.measurements, sched, seed=13)
    U, X = run.ups, run.estimates
    for k in (10, 25, 40):
        S = U[:, k].T @ U[:, k] / N
        Sig = sched.Sigma_Ups[k]
        se = np.sqrt((np.outer(np.diag(Sig), np.diag(Sig)) + Sig**2) / N)
        assert np.all(np.abs(S - Sig) <= 5 * se + 1e-12)
        for j in (0, k // 2, k - 1):
            cross = U[:, k].T @ X[:, j] / N
            bound = 5 * np.sqrt(np.outer(np.diag(Sig), (X[:, j] ** 2).mean(axis=0)) / N)
            assert np.all(np.abs(cross) <= bound + 1e-12)


def test_recursive_matches_analytic_mse(ho_short, ho_short_rec):
    g, sched = ho_short_rec
    tr = sample_batch(ho_short, 10_000, seed=21)
    run = run_recursive_filter(ho_short, g, tr.measurements, sched, seed=21)
    mean, se = mse_and_se(run.estimates, tr.states)
    assert (np.abs(mean - analytic_mse(ho_short, g, sched)) / se).max() <= 4


def test_update_noise_law(ho_short, ho_short_rec):
    g, sched = ho_short_rec
    N = 50_000
    tr = sample_batch(ho_short, N, seed=31)
    J = run_recursive_filter(ho_short, g, tr.measurements, sched, seed=31).updates
    for k in (1, 20, 40):
        S = J[:, k].T @ J[:, k] / N
        se = np.sqrt(2.0 / N)
        assert np.all(np.abs(S - np.eye(2)) <= 5 * se)
        c = J[:, k].T @ J[:, k - 1] / N
        assert np.abs(c).max() <= 5 / np.sqrt(N)


# -- schedules ---------------------------------------------------------------

def test_noise_cov_tolerance():
    Q = np.eye(2)
    assert np.allclose(noise_cov(np.diag([1.0, -1e-9]), Q, 0), np.diag([1.0, 0.0]))
    with pytest.raises(InfeasibleSchedule) as err:
        noise_cov(np.diag([1.0, -1e-3]), Q, 7)
    assert err.value.step == 7


def test_validate_names_offending_step(ho_short):
    g = kalman_gains(ho_short)
    sched = solve_pkf(ho_short, g)
    assert sched.validate(ho_short, g)
    Pi = sched.Pi.copy()
    Pi[12] *= 3.0
    bad = GainSchedule(kind=sched.kind, Pi=Pi, Sigma_w=sched.Sigma_w)
    with pytest.raises(InfeasibleSchedule) as err:
        bad.validate(ho_short, g)
    assert err.value.step == 12


def test_recursive_schedule_invariants(ho_short, ho_short_rec):
    g, sched = ho_short_rec
    assert np.allclose(sched.Sigma_Ups[0], 0)
    q = recursive_quantities(ho_short, g, sched.Pi, sched.Phi)
    assert np.allclose(q["Sigma_Ups"], sched.Sigma_Ups)
    for k in range(ho_short.T + 1):
        assert la.min_eig(q["Sigma_w_raw"][k]) >= -1e-8 * np.linalg.norm(ho_short.Q_at(k), 2)


# -- stationary regime -------------------------------------------------------

def test_dare_scalar_quadratic():
    # P = a^2 P R / (P + R) + q  =>  P^2 + (R - a^2 R - q) P - q R = 0
    a, q, r = 0.5, 1.0, 1.0
    b = r - a * a * r - q
    root = (-b + np.sqrt(b * b + 4 * q * r)) / 2
    assert dare_solve([[a]], [[1.0]], [[q]], [[r]])[0, 0] == pytest.approx(root, rel=1e-9)


def test_dare_without_measurements_is_lyapunov():
    A = np.array([[0.5, 0.2], [0.0, 0.3]])
    P = dare_solve(A, np.zeros((1, 2)), np.eye(2), np.eye(1))
    assert np.allclose(P, A @ P @ A.T + np.eye(2), atol=1e-8)


def test_dare_matches_long_horizon_kalman():
    m = harmonic_oscillator(T=6000)
    g = kalman_gains(m)
    P = dare_solve(m.A, m.C, m.Q, m.R)
    assert np.abs(g.P_prior[-1] - P).max() <= 1e-6 * (1 + np.abs(P).max())


def test_lyapunov_doubling():
    A = np.array([[0.9, 0.1], [0.0, 0.8]])
    W = np.array([[1.0, 0.2], [0.2, 0.5]])
    X = lyapunov_solve(A, W)
    assert np.abs(X - (A @ X @ A.T + W)).max() <= 1e-8 * np.abs(X).max()


def test_stationary_degenerate():
    m = ModelSpec(A=[[0.5]], C=[[1.0]], Q=[[0.0]], R=[[1.0]], P0=[[0.0]], T=3)
    sol = stationary_pkf(m)
    assert sol.M[0, 0] == 0 and sol.Pi[0, 0] == 0 and sol.D[0, 0] == 0


def test_stationary_scalar_series():
    m = ModelSpec(A=[[0.9]], C=[[1.0]], Q=[[1.0]], R=[[1.0]], P0=[[1.0]], T=3)
    sol = stationary_pkf(m)
    W = sol_w = float((m.Q + sol.M - sol.Pi @ sol.M - sol.M @ sol.Pi.T)[0, 0])
    series = sum(0.81**k * sol_w for k in range(10_000))
    assert abs(np.trace(sol.D) - series) <= 1e-8 * abs(series)
    assert W > 0


def test_stationary_solution_invariants(pend):
    sol = stationary_pkf(pend)
    A, C, Q, R = pend.A, pend.C, pend.Q, pend.R
    P = sol.P
    APC = A @ P @ C.T
    resid = A @ P @ A.T - APC @ np.linalg.pinv(C @ P @ C.T + R) @ APC.T + Q - P
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(P)
    W = Q + sol.M - sol.Pi @ sol.M - sol.M @ sol.Pi.T
    assert np.linalg.norm(A @ sol.D @ A.T + W - sol.D) <= 1e-8 * np.linalg.norm(sol.D)


def test_stationary_rejects_unstable(ho):
    with pytest.raises(UnstableA):
        stationary_pkf(ho)


def test_stationary_runtime_template(pend):
    sol = stationary_pkf(pend)
    tr = sample_batch(pend, 2, seed=0)
    run = run_stationary_pkf(pend, sol, tr.measurements, seed=0)
    x, J = run.estimates, run.updates
    assert np.allclose(x[:, 5], x[:, 4] @ pend.A.T + J[:, 5], atol=1e-12)


# -- CSV ---------------------------------------------------------------------

def test_filter_csv_round_trip(tmp_path, ho_short):
    g = kalman_gains(ho_short)
    sched = solve_pkf(ho_short, g)
    tr = sample_batch(ho_short, 3, seed=0, start=5)
    run = run_pkf(ho_short, g, tr.measurements, sched, seed=0, start=5)
    path = tmp_path / "run.csv"
    write_filter_csv(run, path)
    back = read_filter_csv(path)
    assert np.array_equal(back.estimates, run.estimates)
    assert np.array_equal(back.updates, run.updates)
    assert back.start == 5
