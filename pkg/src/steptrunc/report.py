"""Figure rendering for run and convergence reports.

Figures are written next to the delimited output; everything uses the Agg
backend so batch runs need no display.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_run_figures(records, outdir, title=""):
    """Render rank, truncation-estimate, and (when present) error/mass plots."""
    written = []
    t = np.array([r.t for r in records])
    max_rank = np.array([r.max_rank for r in records])

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(t, max_rank, where="post")
    ax.set_xlabel("t")
    ax.set_ylabel("max node rank")
    ax.set_title(title)
    written.append(_save(fig, outdir, "rank.png"))

    ests = np.array([r.trunc_err_est for r in records])
    eps = np.array([r.eps_alpha for r in records])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(t, np.maximum(ests, 1e-300), label="solution truncation estimate")
    if np.any(eps > 0):
        ax.semilogy(t, eps, "--", label="scheduled tolerance")
    ax.set_xlabel("t")
    ax.set_ylabel("Frobenius error estimate")
    ax.set_title(title)
    ax.legend()
    written.append(_save(fig, outdir, "truncation.png"))

    errs = [(r.t, r.err_l2) for r in records if r.err_l2 is not None]
    if errs:
        te, ee = zip(*errs)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(te, np.maximum(ee, 1e-300))
        ax.set_xlabel("t")
        ax.set_ylabel("L2 error vs reference")
        ax.set_title(title)
        written.append(_save(fig, outdir, "error.png"))

    masses = [(r.t, r.mass) for r in records if r.mass is not None]
    if masses:
        tm, mm = zip(*masses)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(tm, np.asarray(mm) - mm[0])
        ax.set_xlabel("t")
        ax.set_ylabel("mass drift")
        ax.set_title(title)
        written.append(_save(fig, outdir, "mass.png"))
    return written


def save_convergence_figure(dts, errors, slope, constant, outdir, title=""):
    """Log-log error vs step size with the fitted power law overlaid."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(dts, errors, "o", label="measured")
    fit = constant * dts**slope
    ax.loglog(dts, fit, "--", label=f"slope {slope:.2f}")
    ax.set_xlabel("dt")
    ax.set_ylabel("L2 error at T")
    ax.set_title(title)
    ax.legend()
    return [_save(fig, outdir, "convergence.png")]


def save_marginal_figure(marginal, grid, outdir, name="marginal.png", title=""):
    """Heat map of a 2D (marginal) density on the periodic grid."""
    fig, ax = plt.subplots(figsize=(5, 4))
    extent = (0.0, 2.0 * np.pi, 0.0, 2.0 * np.pi)
    im = ax.imshow(
        np.asarray(marginal).T, origin="lower", extent=extent, aspect="equal"
    )
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    return [_save(fig, outdir, name)]


def _save(fig, outdir, name):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
