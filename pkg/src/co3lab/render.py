"""Deterministic SVG contour panels: (a) joint vs concepts, (b) corrector density."""
from __future__ import annotations

from typing import List, Optional, Sequence

import contourpy
import numpy as np

from .evaluation import BOX, _grid
from .oracle import ConceptSystem, log_density
from .co3 import corrector_log_density
from .schedule import NoiseSchedule

MASS_LEVELS = (0.5, 0.8, 0.95)
PANEL = 400
MARGIN = 10
MAX_POINTS = 2000
CONCEPT_COLOURS = ("#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2")


def normalised_density(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp - logp.max())
    return p / p.sum()


def hdr_thresholds(p: np.ndarray, masses: Sequence[float] = MASS_LEVELS) -> List[float]:
    """Density values whose super-level sets hold the given probability masses."""
    flat = np.sort(p.ravel())[::-1]
    cum = np.cumsum(flat) / flat.sum()
    return [float(flat[min(np.searchsorted(cum, m), flat.size - 1)]) for m in masses]


def contour_lines(p: np.ndarray, centers_1d: np.ndarray, masses=MASS_LEVELS):
    """Polylines per mass level, each an (n, 2) array in data coordinates."""
    gen = contourpy.contour_generator(centers_1d, centers_1d, p.T, line_type="Separate")
    return [(m, gen.lines(level)) for m, level in zip(masses, hdr_thresholds(p, masses))]


def panel_densities(system: ConceptSystem, weights, resolution: int = 256):
    """Normalised grids for the joint, each concept, and the clean corrector density."""
    if resolution < 64:
        raise ValueError("grid resolution must be >= 64")
    _, pts = _grid(resolution)
    flat = pts.reshape(-1, 2)
    shape = (resolution, resolution)
    joint = normalised_density(log_density(system.joint, flat).reshape(shape))
    concepts = [normalised_density(log_density(c, flat).reshape(shape)) for c in system.concepts]
    clean = NoiseSchedule(np.array([1.0, 0.5]))
    corr = normalised_density(corrector_log_density(system, clean, 0, flat, weights).reshape(shape))
    return pts, joint, concepts, corr


def _to_px(xy, x0):
    scale = PANEL / (BOX[1] - BOX[0])
    px = x0 + (xy[..., 0] - BOX[0]) * scale
    py = MARGIN + (BOX[1] - xy[..., 1]) * scale
    return px, py


def _polylines(lines, x0, cls, colour):
    out = []
    for mass, segs in lines:
        for seg in segs:
            px, py = _to_px(seg, x0)
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
            closed = "closed" if np.allclose(seg[0], seg[-1]) else "open"
            out.append(
                f'<polyline class="{cls} level-{int(round(mass * 100))} {closed}" '
                f'points="{pts}" fill="none" stroke="{colour}" stroke-width="1"/>'
            )
    return out


def _scatter(samples, x0):
    if samples is None:
        return []
    x = np.asarray(samples, dtype=np.float64)[:MAX_POINTS]
    inside = np.all((x > BOX[0]) & (x < BOX[1]), axis=1)
    px, py = _to_px(x[inside], x0)
    return [f'<circle class="sample" cx="{a:.2f}" cy="{b:.2f}" r="1.2" fill="#1f77b4" fill-opacity="0.5"/>' for a, b in zip(px, py)]


def render_contours(
    system: ConceptSystem,
    weights,
    grid_resolution: int = 256,
    samples: Optional[np.ndarray] = None,
    corrected_samples: Optional[np.ndarray] = None,
) -> str:
    """Two-panel SVG: joint (green) and concept contours, then the corrector density.

    ``samples`` are scattered over panel (a), ``corrected_samples`` over
    panel (b). At most 2000 points per panel are drawn. Output bytes depend
    only on the inputs.
    """
    pts, joint, concepts, corr = panel_densities(system, weights, grid_resolution)
    centers = pts[:, 0, 0]
    xa, xb = MARGIN, 2 * MARGIN + PANEL
    width = 3 * MARGIN + 2 * PANEL
    height = 2 * MARGIN + PANEL + 20
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'width="{width}" height="{height}">',
        f'<rect x="{xa}" y="{MARGIN}" width="{PANEL}" height="{PANEL}" fill="white" stroke="black"/>',
        f'<rect x="{xb}" y="{MARGIN}" width="{PANEL}" height="{PANEL}" fill="white" stroke="black"/>',
        '<g class="panel-a">',
    ]
    body += _polylines(contour_lines(joint, centers), xa, "joint", "#2ca02c")
    for k, c in enumerate(concepts):
        body += _polylines(contour_lines(c, centers), xa, f"concept-{k + 1}", CONCEPT_COLOURS[k % len(CONCEPT_COLOURS)])
    body += _scatter(samples, xa)
    body += ["</g>", '<g class="panel-b">']
    body += _polylines(contour_lines(corr, centers), xb, "corrector", "#17becf")
    body += _scatter(corrected_samples, xb)
    body += [
        "</g>",
        f'<text x="{xa + 4}" y="{height - 6}" font-size="12">(a) joint and concepts</text>',
        f'<text x="{xb + 4}" y="{height - 6}" font-size="12">(b) corrector density</text>',
        "</svg>",
    ]
    return "\n".join(body) + "\n"
