"""Causal state estimation for linear-Gaussian models under a perfect perceptual-quality constraint."""

from .errors import (AssumptionViolated, ConfigError, DimensionMismatch, InfeasibleSchedule, NoConvergence,
                     NoImprovement, NotPSD, PKFError, ScaleExceeded, SchemaError, StaleGains, TooFewSamples,
                     UnknownDemo, UnstableA)
from .filters import (FilterRun, GainSchedule, StationarySolution, dare_solve, run_pkf, run_recursive_filter,
                      run_stationary_pkf, run_tic_filter, stationary_pkf, tic_mse_closed_form)
from .gaussian_transport import TransportMap, fit_gaussian, gelbrich_distance, transport_map
from .kalman import KalmanGains, KalmanRun, kalman_filter, kalman_gains
from .lgssm import ModelSpec, Trajectory, sample_batch, sample_trajectory, state_covariance, windowed_state_covariance
from .optimizer import ObjectiveSpec, OptimizerOptions, direct_oracle, optimize_recursive, per_step_search, solve_pkf
from .perceptual_gain import dual_certificate, pkf_gain, pkf_gain_alt, weight_matrices

__version__ = "0.1.0"
