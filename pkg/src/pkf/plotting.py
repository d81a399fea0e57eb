"""SVG plots of quality reports (non-interactive matplotlib backend)."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "pkf"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_reports(reports, floor, out_dir):
    """``<filter>_mse.svg`` and ``<filter>_gelbrich.svg`` per filter, plus ``all_mse.svg``."""
    paths = []
    for name, rep in reports.items():
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(rep.k, rep.empirical_mse, label="empirical")
        ax.fill_between(rep.k, rep.empirical_mse - 3 * rep.mc_stderr, rep.empirical_mse + 3 * rep.mc_stderr,
                        alpha=0.25, lw=0)
        ax.plot(rep.k, rep.analytic_mse, "--", label="analytic")
        ax.set_xlabel("k")
        ax.set_ylabel("MSE")
        ax.set_title(name)
        ax.legend()
        paths.append(_save(fig, os.path.join(out_dir, f"{name}_mse.svg")))

        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(rep.k, rep.marginal_gelbrich, label="marginal")
        ax.plot(rep.k, rep.windowed_gelbrich, label=f"window {rep.window}")
        if floor is not None:
            ax.plot(rep.k, floor[0], ":", color="gray", label="truth floor (marginal)")
            ax.plot(rep.k, floor[1], "-.", color="gray", label=f"truth floor (window {rep.window})")
        ax.set_xlabel("k")
        ax.set_ylabel("Gelbrich distance")
        ax.set_title(name)
        ax.legend()
        paths.append(_save(fig, os.path.join(out_dir, f"{name}_gelbrich.svg")))

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, rep in reports.items():
        ax.plot(rep.k, rep.empirical_mse, label=name)
    ax.set_xlabel("k")
    ax.set_ylabel("empirical MSE")
    ax.legend()
    paths.append(_save(fig, os.path.join(out_dir, "all_mse.svg")))
    return paths
