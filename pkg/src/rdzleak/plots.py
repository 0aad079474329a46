"""Optional SVG plots of sweep reports (needs matplotlib)."""

from __future__ import annotations

import matplotlib

matplotlib.use("svg")
matplotlib.rcParams["svg.hashsalt"] = "rdzleak"
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps repeated runs byte-identical
_SVG_META = {"Date": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def plot_rmse(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for R0 in sorted({r["R0_m"] for r in report.rows}):
        rows = [r for r in report.rows if r["R0_m"] == R0]
        phi = [r["phi_delta_deg"] for r in rows]
        ax.plot(phi, [r["rmse_krige"] for r in rows], "o-", label=f"Kriging, R0={R0:g} m")
        ax.plot(phi, [r["rmse_baseline"] for r in rows], "s--", label=f"path loss, R0={R0:g} m")
    ax.set_xlabel("angle spacing (deg)")
    ax.set_ylabel("RMSE (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_nmse(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    phi = [r["phi_delta_deg"] for r in report.rows]
    for c in ("eta", "A", "B", "d_cor"):
        ax.semilogy(phi, [r[f"nmse_{c}"] for r in report.rows], "o-", label=c)
    ax.set_xlabel("angle spacing (deg)")
    ax.set_ylabel("NMSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_cdf(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for row, table in zip(report.rows, report.tables.values()):
        ax.plot(table[:, 0], table[:, 1], label=f"RG={row['RG_m']:g} m")
    ax.axhline(0.9, color="0.6", lw=0.8, ls=":")
    ax.set_xlabel("received power at sensors (dBm)")
    ax.set_ylabel("CDF")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_spacing(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for phi in sorted({r["phi_delta_deg"] for r in report.rows}):
        rows = [r for r in report.rows if r["phi_delta_deg"] == phi]
        ax.plot([r["R0_m"] for r in rows], [r["d_delta_m"] for r in rows], label=f"{phi:g} deg")
    ax.set_xlabel("R0 (m)")
    ax.set_ylabel("adjacent sensor distance (m)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    _save(fig, path)
