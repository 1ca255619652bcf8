"""Figure emitters for run reports.

Two renderings of the same artifacts: a hand-assembled SVG that is
byte-identical across runs (fixed 1000x1000 viewbox, fixed coordinate
formatting, no timestamps) for the machine-checkable record, and a
matplotlib PNG for eyeballing next to the delimited output.
"""

from __future__ import annotations

import numpy as np

VIEW = 1000.0
PAD = 0.06


class FigureArtifacts:
    """Everything the figure layers need, in world (z-plane) coordinates."""

    def __init__(self, boundary=None, level_curves=None, critical_points=None,
                 region_sides=None, warnings=None):
        self.boundary = boundary
        self.level_curves = level_curves if level_curves is not None else []
        self.critical_points = critical_points if critical_points is not None else []
        self.region_sides = region_sides if region_sides is not None else {}
        self.warnings = list(warnings) if warnings else []
        if boundary is None:
            self.warnings.append("boundary artifact missing")


def _world_box(art: FigureArtifacts):
    pts = []
    if art.boundary is not None:
        pts.append(art.boundary)
    for c in art.level_curves:
        pts.append(c)
    for s in art.region_sides.values():
        pts.append(s)
    if art.critical_points:
        pts.append(np.array([z for z, _ in art.critical_points]))
    if not pts:
        return -1.0, 1.0, -1.0, 1.0
    allp = np.concatenate([np.atleast_1d(p) for p in pts])
    x0, x1 = float(allp.real.min()), float(allp.real.max())
    y0, y1 = float(allp.imag.min()), float(allp.imag.max())
    span = max(x1 - x0, y1 - y0, 1e-9)
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    half = 0.5 * span * (1 + 2 * PAD)
    return cx - half, cx + half, cy - half, cy + half


class _Mapper:
    def __init__(self, box):
        self.x0, self.x1, self.y0, self.y1 = box
        self.sx = VIEW / (self.x1 - self.x0)
        self.sy = VIEW / (self.y1 - self.y0)

    def xy(self, z):
        x = (np.real(z) - self.x0) * self.sx
        y = VIEW - (np.imag(z) - self.y0) * self.sy
        return x, y

    def fmt(self, z):
        x, y = self.xy(z)
        return f"{x:.2f},{y:.2f}"


def render_svg(art: FigureArtifacts) -> str:
    """Deterministic SVG: one boundary path, layered curves and markers."""
    m = _Mapper(_world_box(art))
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1000 1000" width="1000" height="1000">',
        '<rect class="background" x="0" y="0" width="1000" height="1000" fill="white"/>',
    ]
    lines.append('<g id="boundary">')
    if art.boundary is not None:
        d = "M " + " L ".join(m.fmt(z) for z in art.boundary) + " Z"
        lines.append(f'<path class="domain-boundary" d="{d}" fill="none" stroke="#1a1a1a" stroke-width="2"/>')
    lines.append("</g>")

    lines.append('<g id="image-rectangle">')
    for name in sorted(art.region_sides):
        pts = " ".join(m.fmt(z) for z in art.region_sides[name])
        lines.append(
            f'<polyline class="region-side" data-side="{name}" points="{pts}" '
            'fill="none" stroke="#7a5195" stroke-width="1.5" stroke-dasharray="6,4"/>'
        )
    lines.append("</g>")

    lines.append('<g id="level-curves">')
    for k, curve in enumerate(art.level_curves):
        pts = " ".join(m.fmt(z) for z in curve)
        lines.append(
            f'<polyline class="level-curve" data-index="{k}" points="{pts}" '
            'fill="none" stroke="#2166ac" stroke-width="1.2"/>'
        )
    lines.append("</g>")

    lines.append('<g id="critical-points">')
    for z, mult in art.critical_points:
        x, y = m.xy(z)
        lines.append(
            f'<circle class="critical-point" cx="{x:.2f}" cy="{y:.2f}" r="7" '
            f'fill="#d7301f" stroke="#7f0000" stroke-width="1.5" data-multiplicity="{int(mult)}"/>'
        )
    lines.append("</g>")

    lines.append('<g id="warnings">')
    for k, msg in enumerate(art.warnings):
        lines.append(
            f'<text class="warning" x="16" y="{24 + 20 * k}" fill="#b35806" '
            f'font-family="monospace" font-size="14">{_escape(msg)}</text>'
        )
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _escape(text):
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(path, art: FigureArtifacts) -> str:
    text = render_svg(art)
    with open(path, "w") as fh:
        fh.write(text)
    return text


def write_png(path, art: FigureArtifacts, dpi=130):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 7))
    if art.boundary is not None:
        ax.plot(art.boundary.real, art.boundary.imag, color="#1a1a1a", lw=1.6, label="boundary")
    for name in sorted(art.region_sides):
        s = art.region_sides[name]
        ax.plot(s.real, s.imag, color="#7a5195", lw=1.1, ls="--")
    for k, curve in enumerate(art.level_curves):
        ax.plot(curve.real, curve.imag, color="#2166ac", lw=0.9)
    if art.critical_points:
        zs = np.array([z for z, _ in art.critical_points])
        ax.plot(zs.real, zs.imag, "o", color="#d7301f", ms=7, mec="#7f0000", label="critical points")
    for k, msg in enumerate(art.warnings):
        ax.text(0.02, 0.98 - 0.05 * k, msg, transform=ax.transAxes, va="top",
                color="#b35806", fontsize=8, family="monospace")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
