import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def plot_ratio(rows, fits=None, grid=False, title="Pinned / restricted log-ratio"):
    """
    Plots log G^{+,n}(x_L) - log G(x_L | P_+) against L, one line per beta
    Parameters:
    rows: pandas.DataFrame with columns L, beta, ratio_log, err_lo, err_hi
    fits: optional pandas.DataFrame of per-beta slopes
    """
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(111)
    group = ["beta", "M"] if "M" in rows else ["beta"]
    for key, df in rows.groupby(group, sort=True):
        df = df.sort_values("L")
        label = ", ".join(f"{k}={v:g}" for k, v in zip(group, np.atleast_1d(key)))
        ax.errorbar(
            df.L, df.ratio_log,
            yerr=[df.ratio_log - df.err_lo, df.err_hi - df.ratio_log],
            marker="o", capsize=2, label=label,
        )
    if fits is not None and "slope" in fits and "M" not in rows:
        for f in fits.itertuples():
            L = rows.L.sort_values().to_numpy()
            ax.plot(L, f.intercept + f.slope * L, "k--", linewidth=0.8)
    ax.set_xlabel("L")
    ax.set_ylabel("log ratio")
    ax.set_title(title)
    ax.legend()
    if grid == True:
        ax.grid(True)
    return fig


def plot_wulff(rows, grid=False, title="Wulff shape boundary"):
    """
    Plots the boundary points h of K_beta, one curve per beta
    Parameters:
    rows: pandas.DataFrame with columns beta, h1, h2
    """
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(111)
    for beta, df in rows.groupby("beta", sort=True):
        df = df.sort_values("theta")
        ax.plot(df.h1, df.h2, marker=".", label=f"beta={beta:g}")
    ax.set_xlabel("h1")
    ax.set_ylabel("h2")
    ax.set_title(title)
    ax.legend()
    if grid == True:
        ax.grid(True)
    ax.axis("equal")
    return fig


PLOTTERS = {
    "ratio": lambda rows, fits: plot_ratio(rows, fits),
    "pinning-demo": lambda rows, fits: plot_ratio(rows, fits, title="Pinning counterexample"),
    "wulff": lambda rows, fits: plot_wulff(rows),
}


def plot_experiment(experiment, rows, fits, path):
    """Save the figure of an experiment to path; None when it has no plot."""
    plotter = PLOTTERS.get(experiment)
    if plotter is None:
        return None
    fig = plotter(rows, fits)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
