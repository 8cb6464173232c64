"""Figures from aggregate and runtime CSV data (matplotlib, non-interactive)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABELS = {"p": "observation probability $p$", "snr_b": "model SNR of $B'$ (dB)", "S": "rank $r$"}
STYLE = {"proposed": dict(marker="o", color="C0"), "baseline": dict(marker="s", color="C1", ls="--")}


def _series(rows, method, attr):
    pts = sorted((r.sweep_value, getattr(r, attr + "_mean"), getattr(r, attr + "_stderr"))
                 for r in rows if r.method == method)
    return [list(col) for col in zip(*pts)] if pts else ([], [], [])


def plot_errors(rows, sweep, path, metric="nmse", title=None, x_scale=1.0):
    """Mean error with standard-error bars, one curve per method, log y axis.

    ``x_scale`` multiplies the sweep values (``2`` turns ``S`` into the rank
    for the rank sweep with ``d = 2``).
    """
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for method in ("proposed", "baseline"):
        x, y, e = _series(rows, method, metric)
        if x:
            ax.errorbar([v * x_scale for v in x], y, yerr=e, label=method, capsize=3, **STYLE[method])
    ax.set_yscale("log")
    ax.set_xlabel(LABELS.get(sweep, sweep))
    ax.set_ylabel(metric.upper())
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_runtime(rows, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    x = [r.sweep_value for r in rows]
    ax.plot(x, [r.proposed for r in rows], label="proposed", **STYLE["proposed"])
    ax.plot(x, [r.baseline for r in rows], label="baseline", **STYLE["baseline"])
    ax.set_yscale("log")
    ax.set_xlabel(LABELS["p"])
    ax.set_ylabel("seconds per iteration")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(rows, sweep, out_dir, title=None, x_scale=1.0):
    """Write ``nmse.png`` and ``rnmse.png`` into ``out_dir``; returns the paths."""
    return [
        plot_errors(rows, sweep, out_dir / f"{metric}.png", metric, title, x_scale)
        for metric in ("nmse", "rnmse")
    ]
