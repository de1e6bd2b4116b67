"""Label-embedding export: 2-D PCA, CSV, a Plotly scatter and a static SVG."""

import csv
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Union

import numpy as np
import plotly.graph_objects as go

from config import DEFAULT_PCA_ITERATIONS, DEFAULT_PCA_TOLERANCE
from pemi.errors import DimensionError

LEVEL_SYMBOLS = ("diamond", "circle", "square", "triangle-up", "x")
LEVEL_COLORS = ("#636efa", "#ef553b", "#00cc96", "#ab63fa", "#ffa15a")
SVG_NAMESPACE = "http://www.w3.org/2000/svg"


def _leading_direction(
    matrix: np.ndarray, start: np.ndarray, iterations: int, tolerance: float
) -> np.ndarray:
    vector = start / np.linalg.norm(start)
    for _ in range(iterations):
        product = matrix @ vector
        norm = np.linalg.norm(product)
        if norm == 0.0:
            return np.zeros_like(vector)
        candidate = product / norm
        if np.linalg.norm(candidate - vector) < tolerance:
            vector = candidate
            break
        vector = candidate
    # sign convention: largest-magnitude entry positive
    if vector[np.argmax(np.abs(vector))] < 0:
        vector = -vector
    return vector


def pca_2d(
    points: np.ndarray,
    iterations: int = DEFAULT_PCA_ITERATIONS,
    tolerance: float = DEFAULT_PCA_TOLERANCE,
) -> np.ndarray:
    """
    Project rows onto their two leading principal directions.

    Directions come from power iteration on the covariance matrix with
    deflation; the start vector is fixed, so results are deterministic.

    Args:
        points: n×d matrix
        iterations: Power-iteration cap per direction
        tolerance: Stop when successive unit vectors differ by less than this

    Returns:
        n×2 coordinates (zeros along a direction with no variance)
    """
    data = np.asarray(points, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionError(f"points must be a 2-D matrix, got shape {data.shape}")
    centered = data - data.mean(axis=0, keepdims=True)
    covariance = centered.T @ centered
    start = np.random.default_rng(0).normal(size=data.shape[1])

    directions = []
    for _ in range(2):
        direction = _leading_direction(covariance, start, iterations, tolerance)
        directions.append(direction)
        variance = direction @ covariance @ direction
        covariance = covariance - variance * np.outer(direction, direction)
    return centered @ np.stack(directions, axis=1)


def write_embeddings_csv(
    path: Union[str, Path],
    levels: list[int],
    labels: list[str],
    vectors: np.ndarray,
    coords: np.ndarray,
) -> None:
    """Write ``level,label,pc1,pc2,v0..v{d-1}`` rows."""
    width = vectors.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["level", "label", "pc1", "pc2", *(f"v{i}" for i in range(width))])
        for level, label, vector, (x, y) in zip(levels, labels, vectors, coords):
            writer.writerow([level, label, repr(float(x)), repr(float(y)), *(repr(float(v)) for v in vector)])


def create_embedding_scatter(
    levels: list[int],
    labels: list[str],
    coords: np.ndarray,
) -> go.Figure:
    """
    Create a Plotly scatter of PCA label coordinates, one trace per level.

    Returns:
        Figure with a distinct marker symbol per level and label text on hover
    """
    fig = go.Figure()
    for offset, level in enumerate(sorted(set(levels))):
        rows = [i for i, z in enumerate(levels) if z == level]
        fig.add_trace(
            go.Scatter(
                x=[float(coords[i, 0]) for i in rows],
                y=[float(coords[i, 1]) for i in rows],
                mode="markers+text" if len(rows) <= 20 else "markers",
                name=f"level {level}",
                text=[labels[i] for i in rows],
                textposition="top center",
                marker=dict(
                    symbol=LEVEL_SYMBOLS[offset % len(LEVEL_SYMBOLS)],
                    size=14 if offset == 0 else 8,
                ),
                hovertemplate="%{text}<br>(%{x:.3f}, %{y:.3f})<extra></extra>",
            )
        )

    fig.update_layout(
        title="Label Embeddings (PCA)",
        xaxis=dict(title="PC 1"),
        yaxis=dict(title="PC 2"),
        width=800,
        height=700,
        showlegend=True,
    )
    return fig


def write_scatter_html(fig: go.Figure, path: Union[str, Path]) -> None:
    fig.write_html(str(path), include_plotlyjs="cdn", full_html=True, div_id="pemi-label-embeddings")


def _marker(offset: int, x: float, y: float, radius: float) -> ET.Element:
    """One marker in the shape and color of the level ranked ``offset`` in the plot."""
    symbol = LEVEL_SYMBOLS[offset % len(LEVEL_SYMBOLS)]
    color = LEVEL_COLORS[offset % len(LEVEL_COLORS)]
    if symbol == "circle":
        return ET.Element("circle", cx=f"{x:.2f}", cy=f"{y:.2f}", r=f"{radius:.2f}", fill=color)
    if symbol == "square":
        side = 1.6 * radius
        corner = (x - side / 2, y - side / 2)
        return ET.Element(
            "rect",
            x=f"{corner[0]:.2f}",
            y=f"{corner[1]:.2f}",
            width=f"{side:.2f}",
            height=f"{side:.2f}",
            fill=color,
        )
    if symbol == "x":
        d = 0.8 * radius
        strokes = f"M{x - d:.2f},{y - d:.2f} L{x + d:.2f},{y + d:.2f} M{x - d:.2f},{y + d:.2f} L{x + d:.2f},{y - d:.2f}"
        return ET.Element("path", {"d": strokes, "fill": "none", "stroke": color, "stroke-width": "2"})
    if symbol == "diamond":
        corners = [(x, y - radius), (x + radius, y), (x, y + radius), (x - radius, y)]
    else:  # triangle-up
        corners = [(x, y - radius), (x + radius, y + radius), (x - radius, y + radius)]
    return ET.Element("polygon", points=" ".join(f"{cx:.2f},{cy:.2f}" for cx, cy in corners), fill=color)


def _text(parent: ET.Element, x: float, y: float, content: str, size: int, anchor: str = "middle") -> None:
    node = ET.SubElement(
        parent, "text", {"x": f"{x:.2f}", "y": f"{y:.2f}", "font-size": str(size), "text-anchor": anchor}
    )
    node.text = content


def create_embedding_svg(
    levels: list[int],
    labels: list[str],
    coords: np.ndarray,
    width: int = 800,
    height: int = 700,
) -> ET.Element:
    """
    Draw PCA label coordinates as a standalone SVG document.

    Each point is a ``<g class="point level-z">`` holding one marker and a
    ``<title>`` with its label. Marker shapes follow LEVEL_SYMBOLS by the
    level's rank in the plotted range, and the first level is drawn larger,
    so parents stand apart from the labels below them.
    """
    margin = 60.0
    points = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    low, high = points.min(axis=0), points.max(axis=0)
    span = np.where(high - low > 0.0, high - low, 1.0)

    def place(point: np.ndarray) -> tuple[float, float]:
        fx, fy = (point - low) / span
        return margin + fx * (width - 2 * margin), height - margin - fy * (height - 2 * margin)

    svg = ET.Element(
        "svg", xmlns=SVG_NAMESPACE, width=str(width), height=str(height), viewBox=f"0 0 {width} {height}"
    )
    ET.SubElement(svg, "rect", width="100%", height="100%", fill="white")
    _text(svg, width / 2, 30, "Label Embeddings (PCA)", 18)

    for offset, level in enumerate(sorted(set(levels))):
        radius = 9.0 if offset == 0 else 5.0
        rows = [i for i, z in enumerate(levels) if z == level]
        for i in rows:
            x, y = place(points[i])
            group = ET.SubElement(svg, "g", {"class": f"point level-{level}", "data-label": labels[i]})
            ET.SubElement(group, "title").text = labels[i]
            group.append(_marker(offset, x, y, radius))
            if len(rows) <= 20:
                _text(group, x, y - radius - 3, labels[i], 11)

        legend = ET.SubElement(svg, "g", {"class": "legend"})
        legend.append(_marker(offset, width - 110, 50 + 20 * offset, 6.0))
        _text(legend, width - 95, 54 + 20 * offset, f"level {level}", 12, anchor="start")
    return svg


def write_scatter_svg(svg: ET.Element, path: Union[str, Path]) -> None:
    ET.ElementTree(svg).write(str(path), encoding="utf-8", xml_declaration=True)
