"""Allocation-slice plots: sweep two bid coordinates, render SVG heatmaps.

All bids except the two swept coordinates are pinned (default: midpoint
of the valuation support). The reported allocation row belongs to the
configured agent, defaulting to the agent owning the first swept
coordinate. Output is dependency-free SVG plus a long-form CSV.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .auctions import AuctionSpec, ValuationModel
from .autodiff import Tensor
from .config import PlotConfig
from .networks import RegretNetModel

__all__ = ["grid_allocations", "grid_to_csv", "heatmap_svg", "render_plots"]

GRID_CSV_HEADER = ["b1", "b2", "item", "z"]


def grid_allocations(
    model: RegretNetModel,
    spec: AuctionSpec,
    vmodel: ValuationModel,
    plot: PlotConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sweep the two plot coordinates; returns (b1 axis, b2 axis, z grid).

    z has shape (resolution, resolution, m_items): the reported agent's
    allocation probability per item at each grid point.
    """
    if plot.resolution < 2:
        raise ValueError(f"grid_allocations: resolution must be >= 2, got {plot.resolution}")
    (a1, j1), (a2, j2) = plot.coords
    if (a1, j1) == (a2, j2):
        raise ValueError("grid_allocations: the two swept coordinates must differ")
    for a, j in plot.coords:
        if not (0 <= a < spec.n_agents and 0 <= j < spec.m_items):
            raise ValueError(
                f"grid_allocations: coordinate ({a},{j}) outside a "
                f"{spec.n_agents}x{spec.m_items} auction"
            )
    lo, hi = vmodel.support(spec)
    R = plot.resolution
    b1 = np.linspace(lo[a1, j1], hi[a1, j1], R)
    b2 = np.linspace(lo[a2, j2], hi[a2, j2], R)
    pinned = np.full((spec.n_agents, spec.m_items), plot.pins) if plot.pins is not None \
        else (lo + hi) / 2.0
    bids = np.broadcast_to(pinned, (R * R, spec.n_agents, spec.m_items)).copy()
    g1, g2 = np.meshgrid(b1, b2, indexing="ij")
    bids[:, a1, j1] = g1.ravel()
    bids[:, a2, j2] = g2.ravel()
    agent = plot.agent if plot.agent is not None else a1
    z = model.allocation(Tensor(bids), frozen=True).data[:, agent, :]
    return b1, b2, z.reshape(R, R, spec.m_items)


def grid_to_csv(b1: np.ndarray, b2: np.ndarray, z: np.ndarray, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_CSV_HEADER)
        for i1 in range(z.shape[0]):
            for i2 in range(z.shape[1]):
                for j in range(z.shape[2]):
                    writer.writerow([repr(float(b1[i1])), repr(float(b2[i2])), j,
                                     repr(float(z[i1, i2, j]))])


_LOW = np.array([24.0, 34.0, 84.0])
_HIGH = np.array([255.0, 214.0, 80.0])


def _color(v: float) -> str:
    v = min(max(v, 0.0), 1.0)
    r, g, b = (_LOW + v * (_HIGH - _LOW)).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(values: np.ndarray, title: str, path: str,
                x_range=(0.0, 1.0), y_range=(0.0, 1.0)) -> None:
    """Render a [0,1]-scaled heatmap with axes and a colorbar."""
    R1, R2 = values.shape
    cell = max(420 // max(R1, R2), 4)
    w, h = R1 * cell, R2 * cell
    margin, bar_w = 46, 18
    total_w, total_h = w + margin + bar_w + 58, h + margin + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
        f'viewBox="0 0 {total_w} {total_h}">',
        f'<rect width="{total_w}" height="{total_h}" fill="white"/>',
        f'<text x="{margin + w / 2:.0f}" y="16" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]
    for i1 in range(R1):
        for i2 in range(R2):
            x = margin + i1 * cell
            y = 24 + (R2 - 1 - i2) * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_color(float(values[i1, i2]))}"/>'
            )
    ax_font = 'font-family="sans-serif" font-size="10"'
    parts.append(f'<text x="{margin}" y="{24 + h + 12}" {ax_font}>{x_range[0]:g}</text>')
    parts.append(f'<text x="{margin + w}" y="{24 + h + 12}" text-anchor="end" {ax_font}>'
                 f'{x_range[1]:g}</text>')
    parts.append(f'<text x="{margin - 4}" y="{24 + h}" text-anchor="end" {ax_font}>'
                 f'{y_range[0]:g}</text>')
    parts.append(f'<text x="{margin - 4}" y="32" text-anchor="end" {ax_font}>{y_range[1]:g}</text>')
    bar_x = margin + w + 16
    steps = 32
    for s in range(steps):
        v = 1.0 - s / (steps - 1)
        y = 24 + s * (h / steps)
        parts.append(f'<rect x="{bar_x}" y="{y:.1f}" width="{bar_w}" '
                     f'height="{h / steps + 0.8:.1f}" fill="{_color(v)}"/>')
    parts.append(f'<text x="{bar_x + bar_w + 4}" y="32" {ax_font}>1</text>')
    parts.append(f'<text x="{bar_x + bar_w + 4}" y="{24 + h}" {ax_font}>0</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def render_plots(
    model: RegretNetModel,
    spec: AuctionSpec,
    vmodel: ValuationModel,
    plot: PlotConfig,
    out_dir: str,
) -> list[str]:
    """Write the grid CSV and one SVG heatmap per item; returns the paths."""
    b1, b2, z = grid_allocations(model, spec, vmodel, plot)
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "allocation_grid.csv")]
    grid_to_csv(b1, b2, z, paths[0])
    (a1, j1), (a2, j2) = plot.coords
    agent = plot.agent if plot.agent is not None else a1
    for j in range(spec.m_items):
        path = os.path.join(out_dir, f"allocation_item{j}.svg")
        heatmap_svg(
            z[:, :, j],
            f"agent {agent}, item {j} | x: bid({a1},{j1}) y: bid({a2},{j2})",
            path,
            x_range=(float(b1[0]), float(b1[-1])),
            y_range=(float(b2[0]), float(b2[-1])),
        )
        paths.append(path)
    return paths
