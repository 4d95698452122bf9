"""Figure rendering for the report path (written next to the CSV outputs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np

from .fields import Field

__all__ = ["render_solution", "render_trace"]


def _triangulation(mesh):
    return mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1],
                              mesh.triangles)


def render_solution(field: Field, path, title: str | None = None) -> None:
    """Heatmap(s) of the nodal solution, one panel per component."""
    tri = _triangulation(field.mesh)
    values = field.vertex_values()
    k = field.k
    fig, axes = plt.subplots(1, k, figsize=(4.8 * k, 4.0), squeeze=False)
    for i, ax in enumerate(axes[0]):
        vmax = float(np.abs(values[i]).max()) or 1.0
        img = ax.tripcolor(tri, values[i], shading="gouraud", cmap="RdBu_r",
                           vmin=-vmax, vmax=vmax)
        fig.colorbar(img, ax=ax, shrink=0.9)
        ax.set_aspect("equal")
        ax.set_title(f"u{i + 1}" if k > 1 else "u")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def render_trace(trace, path) -> None:
    """Energy and gradient-norm history of a run."""
    idx = [s.index for s in trace.steps]
    energy = [s.energy for s in trace.steps]
    gnorm = [s.grad_norm for s in trace.steps]
    fig, ax1 = plt.subplots(figsize=(6.4, 4.2))
    ax1.plot(idx, energy, marker=".", color="tab:blue", label="energy")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("energy", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.semilogy(idx, gnorm, marker=".", color="tab:red", label="|grad|_H")
    ax2.set_ylabel("gradient norm", color="tab:red")
    fig.suptitle(f"descent trace ({trace.status})")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
