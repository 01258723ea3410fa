"""Columnar diagnostics and figure rendering.

Diagnostics are plain comma-separated text with a fixed header naming
every column; they contain no timestamps, so reruns of the same manifest
produce byte-identical files.  Figures are rendered to PNG next to the
delimited output.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DIAGNOSTIC_COLUMNS = (
    "t",
    "mass",
    "l1",
    "l2",
    "linf",
    "min",
    "envelope",
    "polarization_x",
    "polarization_y",
)


def write_diagnostics(path, reports) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")
        for r in reports:
            row = (r.t, r.mass, r.l1, r.l2, r.linf, r.min_value, r.envelope, r.pol_x, r.pol_y)
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_diagnostics(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: rows[:, i] for i, name in enumerate(header)}


def write_columns(path, header, columns) -> None:
    """Generic columnar writer: header names, then one row per entry."""
    arrays = [np.asarray(c) for c in columns]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    return f"{float(v):.17g}"


def append_summary(path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def render_diagnostics_figure(csv_path, out_path, title="") -> None:
    d = read_diagnostics(csv_path)
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))

    ax = axes[0, 0]
    ax.plot(d["t"], d["linf"], label="sup norm")
    ax.plot(d["t"], d["l2"], label="L2 norm")
    finite_env = np.isfinite(d["envelope"])
    if finite_env.any():
        ax.plot(d["t"][finite_env], d["envelope"][finite_env], "k--", label="envelope")
    ax.set_xlabel("t")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("norms vs certificate")

    ax = axes[0, 1]
    m0 = d["mass"][0] if d["mass"][0] != 0 else 1.0
    ax.plot(d["t"], d["mass"] / m0 - 1.0)
    ax.set_xlabel("t")
    ax.set_title("relative mass drift")

    ax = axes[1, 0]
    ax.plot(d["t"], d["min"])
    ax.set_xlabel("t")
    ax.set_title("min value")

    ax = axes[1, 1]
    ax.plot(d["polarization_x"], d["polarization_y"], ".-")
    ax.set_xlabel("polarization x")
    ax.set_ylabel("polarization y")
    lim = max(1.0, np.abs(d["polarization_x"]).max(), np.abs(d["polarization_y"]).max())
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.set_title("order parameter")

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_scaling_figure(rows, slopes, pooled, out_path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    labels = sorted({r.phi_label for r in rows})
    for lab in labels:
        pts = sorted((r.eps, r.remainder) for r in rows if r.phi_label == lab)
        eps = [p[0] for p in pts]
        rem = [p[1] for p in pts]
        s = slopes.get(lab, (float("nan"), float("inf")))
        ax.loglog(eps, rem, "o-", label=f"{lab} (slope {s[0]:.2f})")
    ax.set_xlabel("eps")
    ax.set_ylabel("weak remainder")
    ax.set_title(f"remainder vs eps (pooled slope {pooled:.2f})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_continuity_figure(report, out_path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(report.times, report.ratio_lp, "o-", label="gap ratio (Lp-normalized)")
    tt = np.linspace(report.times[0], report.times[-1], 200)
    ax.plot(tt, np.exp(report.c_fit * tt), "k--", label=f"exp({report.c_fit:.3g} t)")
    ax.set_xlabel("t")
    ax.set_ylabel("gap growth")
    ax.legend(fontsize=8)
    ax.set_title(f"continuity in data, p={report.p:g}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_particle_figure(times, pols, kin_times=None, kin_pols=None, out_path=None) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    pols = np.asarray(pols)
    mag = np.hypot(pols[:, 0], pols[:, 1])
    ax.plot(times, mag, "o-", label="particle polarization")
    if kin_times is not None:
        kp = np.asarray(kin_pols)
        ax.plot(kin_times, np.hypot(kp[:, 0], kp[:, 1]), "-", label="kinetic polarization")
    ax.set_xlabel("t")
    ax.set_ylabel("|polarization|")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_verify_figure(ntheta_list, residuals_fd, residual_spectral, out_path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(ntheta_list, residuals_fd, "o-", label="finite differences")
    ax.loglog(
        ntheta_list,
        [residuals_fd[0] * (ntheta_list[0] / n) ** 2 for n in ntheta_list],
        "k--",
        label="order 2",
    )
    ax.axhline(residual_spectral, color="gray", ls=":", label="spectral @ 64")
    ax.set_xlabel("ntheta")
    ax.set_ylabel("identity residual")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
