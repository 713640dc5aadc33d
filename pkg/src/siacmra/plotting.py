"""Optional matplotlib figures rendered next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_error_steps(path: Path, series: dict[str, tuple[np.ndarray, np.ndarray]], title: str) -> Path:
    """Semilog error per enhancement step, one line per labelled series."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, (steps, err) in series.items():
        ax.semilogy(steps, err, "o-", label=label)
    ax.set_xlabel("enhancement step")
    ax.set_ylabel("L2 error")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_adapt_history(path: Path, dof: np.ndarray, err: np.ndarray, eta: np.ndarray, ref: tuple[int, float] | None, title: str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(dof, err, "o-", label="error")
    ax.loglog(dof, eta, "s--", label="indicator")
    if ref is not None:
        ax.loglog([ref[0]], [ref[1]], "k*", ms=10, label="uniform reference")
    ax.set_xlabel("degrees of freedom")
    ax.set_ylabel("global L2")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_mesh_levels(path: Path, mesh, title: str) -> Path:
    """Final mesh coloured by refinement level."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4) if mesh.dim == 2 else (6, 2.5))
    if mesh.dim == 1:
        ev = mesh.element_vertices[:, :, 0]
        ax.bar(ev[:, 0], mesh.level + 1, width=ev[:, 1] - ev[:, 0], align="edge", edgecolor="k", linewidth=0.3)
        ax.set_xlabel("x")
        ax.set_ylabel("level + 1")
    else:
        from matplotlib.collections import PolyCollection

        polys = PolyCollection(mesh.element_vertices, array=mesh.level, cmap="viridis", edgecolors="k", linewidths=0.2)
        ax.add_collection(polys)
        ax.set_xlim(*mesh.box[0])
        ax.set_ylim(*mesh.box[1])
        ax.set_aspect("equal")
        fig.colorbar(polys, ax=ax, label="level")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
