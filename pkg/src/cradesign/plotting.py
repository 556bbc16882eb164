"""Deterministic SVG renderers over the CSV/JSON artifacts.

Every function here is a pure function of its inputs: figures are saved with
no timestamp and a fixed SVG id salt so repeated renders are byte-identical.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import PolyCollection  # noqa: E402
from matplotlib.colors import Normalize  # noqa: E402

from .geometry import ReflectorMesh, _orthonormal_frame  # noqa: E402

SVG_SALT = "cradesign"


class PlotError(ValueError):
    pass


def save_svg(fig, path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def singular_value_figure(series: dict):
    """``series`` maps label -> singular values (plotted in stored order)."""
    if not series or any(len(np.asarray(v)) == 0 for v in series.values()):
        raise PlotError("no singular values to plot")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, s in series.items():
        s = np.asarray(s, dtype=float)
        ax.semilogy(np.arange(1, s.size + 1), s, marker=".", label=label)
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")
    ax.legend(fontsize=7)
    ax.grid(True, which="both", lw=0.3)
    return fig


def success_curve_figure(curves: dict):
    """``curves`` maps label -> list of (S, rate)."""
    if not curves or any(len(c) == 0 for c in curves.values()):
        raise PlotError("empty success curve")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, c in curves.items():
        S, rate = np.asarray(c, dtype=float).T
        ax.plot(S, rate, marker="o", label=label)
    ax.set_xlabel("sparsity S")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7)
    ax.grid(True, lw=0.3)
    return fig


def facet_polygons(mesh: ReflectorMesh) -> np.ndarray:
    """Facet triangles projected onto the aperture plane, shape ``(P, 3, 2)``."""
    u, v, _ = _orthonormal_frame(mesh.axis)
    rel = mesh.facet_vertices - mesh.apex_position
    return np.stack([rel @ u, rel @ v], axis=-1)


def eps_difference_figure(mesh: ReflectorMesh, diff):
    """One polygon per facet, diverging colour scale symmetric about zero."""
    diff = np.asarray(diff, dtype=float)
    if diff.shape != (mesh.num_facets,):
        raise PlotError(f"expected {mesh.num_facets} values, got {diff.shape}")
    m = float(np.max(np.abs(diff))) or 1.0
    fig, ax = plt.subplots(figsize=(4.5, 4))
    coll = PolyCollection(facet_polygons(mesh), array=diff, cmap="RdBu_r",
                          norm=Normalize(-m, m), edgecolors="k", linewidths=0.2)
    ax.add_collection(coll)
    ax.autoscale_view()
    ax.set_aspect("equal")
    fig.colorbar(coll, ax=ax, label="difference in dielectric constant")
    return fig


def energy_map_figure(image, extent=None):
    image = np.asarray(image, dtype=float)
    if image.size == 0:
        raise PlotError("empty energy map")
    fig, ax = plt.subplots(figsize=(4.5, 4))
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(image / image.max()) if image.max() > 0 else np.zeros_like(image)
    im = ax.imshow(db, origin="lower", extent=extent, cmap="viridis", vmin=max(db.min(), -60.0))
    ax.set_xlabel("y (m)")
    ax.set_ylabel("z (m)")
    fig.colorbar(im, ax=ax, label="normalized energy (dB)")
    return fig
