"""Deterministic matplotlib figure rendering for the report path.

Figures are written as SVG with a fixed hash salt, text kept as text
elements and no date metadata, so identical inputs produce identical
bytes and the structural tests can grep the markup.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "icl-lab"
plt.rcParams["svg.fonttype"] = "none"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def rate_plot(path, series, target_slope: float):
    """Log-log risk curves, one series per predictor, plus a dashed
    reference line with the target slope anchored at the first series."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for s in series:
        ax.errorbar(s["ns"], s["means"], yerr=s.get("stderrs"),
                    marker="o", capsize=3, label=s["label"])
    if series:
        ns = series[0]["ns"]
        anchor = series[0]["means"][0]
        ref = [anchor * (n / ns[0]) ** target_slope for n in ns]
        ax.plot(ns, ref, "k--", linewidth=1,
                label=f"reference slope {target_slope:.3f}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("context length n")
    ax.set_ylabel("excess risk")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def loss_plot(path, steps, losses, window: int = 100):
    """Raw and moving-average training loss."""
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.plot(steps, losses, alpha=0.3, linewidth=0.6, label="loss")
    if len(losses) >= window:
        kernel = [1.0 / window] * window
        smooth = [sum(losses[max(0, i - window + 1):i + 1])
                  / len(losses[max(0, i - window + 1):i + 1])
                  for i in range(len(losses))]
        ax.plot(steps, smooth, linewidth=1.2, label=f"mean({window})")
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("squared loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def bound_plot(path, reports):
    """Bar chart of the decomposition-bound terms per verified case."""
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    labels = [f"{r['predictor']}\nkappa={r['kappa']:g}" for r in reports]
    xs = range(len(reports))
    ax.bar([x - 0.2 for x in xs], [r["lhs_excess_risk"]["mean"] for r in reports],
           width=0.4, label="excess risk (LHS)")
    ax.bar([x + 0.2 for x in xs], [r["rhs"] for r in reports],
           width=0.4, label="bound (RHS)")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
