"""End-to-end experiment: gains, simulation, filtering, reports and plots."""

import csv
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analytics import analytic_mse, empirical_curves, sampling_floor, stationary_mse_curve
from .errors import ConfigError
from .filters import run_pkf, run_recursive_filter, run_stationary_pkf, run_tic_filter, stationary_pkf, tic_maps, \
    tic_mse_closed_form
from .kalman import kalman_filter, kalman_gains
from .lgssm import sample_batch, state_covariances
from .optimizer import TERMINAL, TOTAL, ObjectiveSpec, optimize_recursive, solve_pkf

#: filters whose coefficients are computed offline and stored in gains files
SCHEDULED = ("pkf_auc", "pkf_minT", "recursive_opt")
CHUNK = 256


def worker_count():
    """Worker threads for trajectory batches, capped by ``PKF_THREADS``."""
    raw = os.environ.get("PKF_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def compute_schedules(model, kgains, filters, opts):
    """Gain schedules for the scheduled filters among ``filters``."""
    out = {}
    if "pkf_auc" in filters:
        out["pkf_auc"] = solve_pkf(model, kgains, ObjectiveSpec(TOTAL), label="pkf_auc")
    if "pkf_minT" in filters:
        out["pkf_minT"] = solve_pkf(model, kgains, ObjectiveSpec(TERMINAL), label="pkf_minT")
    if "recursive_opt" in filters:
        out["recursive_opt"] = optimize_recursive(model, kgains, None, opts, label="recursive_opt")
    return out


def _chunks(n, size=CHUNK):
    return [(s, min(size, n - s)) for s in range(0, n, size)]


def _map(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))


def run_filters(model, kgains, schedules, filters, n, seed, window=16, threads=None, floor=True):
    """Simulate ``n`` trajectories and evaluate every requested filter.

    Trajectory ``i`` uses truth stream ``i``; each filter draws its own noise
    from a stream named after it, so results do not depend on the chunking
    or the number of threads. Returns ``(reports, floor)`` where ``floor``
    holds the two-truth-batch Gelbrich distances per step (or ``None``).
    """
    threads = worker_count() if threads is None else threads
    jobs = _chunks(n)
    parts = _map(lambda s, c: sample_batch(model, c, seed, start=s), jobs, threads)
    X = np.concatenate([p.states for p in parts])
    Y = np.concatenate([p.measurements for p in parts])
    covs = state_covariances(model)
    kruns = _map(lambda s, c: kalman_filter(model, Y[s:s + c], kgains), jobs, threads)
    reports = {}
    maps = tic_maps(model, kgains, covs) if "tic" in filters else None
    stat = stationary_pkf(model) if "stationary" in filters else None
    for name in filters:
        if name == "kalman":
            est = np.concatenate([kr.x_star for kr in kruns])
            analytic = kgains.mmse()
        elif name == "tic":
            runs = _map(lambda s, c: run_tic_filter(model, kruns[s // CHUNK], seed, start=s, maps=maps), jobs, threads)
            est = np.concatenate([r.estimates for r in runs])
            analytic = tic_mse_closed_form(model, kgains, covs)
        elif name in ("pkf_auc", "pkf_minT"):
            sched = schedules[name]
            runs = _map(lambda s, c: run_pkf(model, kgains, None, sched, seed, start=s, krun=kruns[s // CHUNK],
                                             stream=name), jobs, threads)
            est = np.concatenate([r.estimates for r in runs])
            analytic = analytic_mse(model, kgains, sched)
        elif name == "recursive_opt":
            sched = schedules[name]
            runs = _map(lambda s, c: run_recursive_filter(model, kgains, None, sched, seed, start=s,
                                                          krun=kruns[s // CHUNK], stream=name), jobs, threads)
            est = np.concatenate([r.estimates for r in runs])
            analytic = analytic_mse(model, kgains, sched)
        elif name == "stationary":
            runs = _map(lambda s, c: run_stationary_pkf(model, stat, Y[s:s + c], seed, start=s, stream=name), jobs,
                        threads)
            est = np.concatenate([r.estimates for r in runs])
            analytic = stationary_mse_curve(model, stat)[0]
        else:
            raise ValueError(f"unknown filter {name!r}")
        reports[name] = empirical_curves(model, est, X, analytic=analytic, window=window, kind=name, seed=seed,
                                         covs=covs)
        del est
    floor_curves = None
    if floor and n >= 2:
        floor_curves = sampling_floor(model, n, seed, range(model.T + 1), window)
    return reports, floor_curves


def write_outputs(model, reports, floor, out_dir, plots=True):
    """CSV reports (and SVG plots) for every filter; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, rep in reports.items():
        path = os.path.join(out_dir, f"{name}_quality.csv")
        rep.to_csv(path)
        written.append(path)
    if floor is not None:
        path = os.path.join(out_dir, "floor.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "marginal_floor", "windowed_floor"])
            for k, (m, wd) in enumerate(zip(*floor)):
                w.writerow([k, repr(float(m)), repr(float(wd))])
        written.append(path)
    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filter", "k", "analytic_mse", "empirical_mse", "mc_stderr"])
        for name, rep in reports.items():
            w.writerow([name, int(rep.k[-1]), repr(float(rep.analytic_mse[-1])), repr(float(rep.empirical_mse[-1])),
                        repr(float(rep.mc_stderr[-1]))])
    written.append(path)
    if plots:
        from .plotting import plot_reports
        written.extend(plot_reports(reports, floor, out_dir))
    return written


def run_pipeline(cfg, schedules=None, threads=None):
    """Full experiment for a parsed config; ``schedules`` skips optimization."""
    model = cfg.model
    kgains = kalman_gains(model)
    if schedules is None:
        schedules = compute_schedules(model, kgains, cfg.filters, cfg.optimizer)
    missing = [f for f in cfg.filters if f in SCHEDULED and f not in schedules]
    if missing:
        raise ConfigError(f"gains for {', '.join(missing)} are missing")
    reports, floor = run_filters(model, kgains, schedules, cfg.filters, cfg.n_trajectories, cfg.master_seed,
                                 cfg.window, threads)
    paths = write_outputs(model, reports, floor, cfg.output_dir, cfg.plots)
    return reports, schedules, paths
