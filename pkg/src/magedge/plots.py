"""Figure rendering for report data; always opt-in, never on the data path."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scaling_analysis import EdgeSweep, FitReport

__all__ = ["butterfly_figure", "sweep_figure", "harness_figure"]


def butterfly_figure(eps: np.ndarray, eigenvalues: np.ndarray, path) -> None:
    """Scatter of (eps, eigenvalue) pairs, the butterfly picture."""
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(eps, eigenvalues, ".", markersize=1.2, color="k")
    ax.set_xlabel("field strength")
    ax.set_ylabel("eigenvalue")
    ax.set_title("box spectrum vs field strength")
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)


def sweep_figure(sweep: EdgeSweep, fits: list[FitReport], path) -> None:
    """Log-log edge shift against eps with the fitted models overlaid."""
    fig, ax = plt.subplots(figsize=(6.5, 5))
    good = ~sweep.flagged
    if np.any(good):
        ax.loglog(sweep.eps[good], sweep.deltas[good], "o", color="k", label="measured")
    if np.any(sweep.flagged):
        ax.loglog(
            sweep.eps[sweep.flagged],
            np.maximum(sweep.deltas[sweep.flagged], 1e-300),
            "x",
            color="gray",
            label="below noise floor",
        )
    grid = np.geomspace(sweep.eps[0], sweep.eps[-1], 100)
    for fit in fits:
        if fit.model == "power":
            curve = fit.coefficient * grid**fit.exponent
            label = f"C eps^p (p={fit.exponent:.3f})"
        else:
            curve = fit.coefficient * grid * np.log(1.0 / grid)
            label = f"C eps ln(1/eps) (C={fit.coefficient:.3f})"
        ax.loglog(grid, curve, "--", label=label)
    if sweep.noise_floor > 0:
        ax.axhline(sweep.noise_floor, color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("eps")
    ax.set_ylabel("|edge(eps) - edge(0)|")
    ax.set_title(f"{sweep.source or 'sweep'} ({sweep.which} edge, {sweep.field_kind} field)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)


def harness_figure(report: dict, path) -> None:
    """Smoothing-error scaling: certificate lhs against delta per symbol."""
    fig, ax = plt.subplots(figsize=(6.5, 5))
    for block in report.get("schur_certificates", []):
        deltas = [row["delta"] for row in block["rows"]]
        lhs = [max(row["lhs"], 1e-300) for row in block["rows"]]
        ax.loglog(deltas, lhs, "o-", label=f"{block['symbol']} (alpha={block['alpha']})")
    ax.set_xlabel("delta")
    ax.set_ylabel("row-sum smoothing error")
    ax.set_title("kernel smoothing error vs delta")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
