"""Static SVG pictures of planar complexes with point overlays."""
from __future__ import annotations

import numpy as np

from .complex import SimplicialComplex
from .errors import AmbientDimUnsupported

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_svg(K: SimplicialComplex, overlays=(), *, size: int = 480, margin: int = 24, radius: float = 2.5) -> str:
    """Wireframe of the 1-skeleton plus labelled point sets.

    ``overlays`` is a sequence of ``(label, points)`` pairs, points as an
    (m, 2) array-like.  Output depends only on the inputs.
    """
    if K.ambient_dim != 2:
        raise AmbientDimUnsupported(f"SVG output needs a planar complex, got ambient dimension {K.ambient_dim}",
                                    ambient_dim=K.ambient_dim)
    coords = K.coords
    lo = coords.min(axis=0)
    span = float(max((coords.max(axis=0) - lo).max(), 1e-12))
    scale = (size - 2 * margin) / span
    legend_h = 18 * len(overlays)
    height = size + legend_h

    def tx(p):
        x = margin + (float(p[0]) - lo[0]) * scale
        y = size - margin - (float(p[1]) - lo[1]) * scale
        return _fmt(x), _fmt(y)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{height}" viewBox="0 0 {size} {height}">',
        f'<rect x="0" y="0" width="{size}" height="{height}" fill="#ffffff"/>',
        '<g stroke="#444444" stroke-width="1" fill="none">',
    ]
    edges = sorted(s for s in K.simplices if len(s) == 2)
    for a, b in edges:
        (x1, y1), (x2, y2) = tx(coords[a]), tx(coords[b])
        out.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}"/>')
    out.append("</g>")
    out.append('<g fill="#444444">')
    for i in range(len(K.vertices)):
        x, y = tx(coords[i])
        out.append(f'<circle cx="{x}" cy="{y}" r="1.5"/>')
    out.append("</g>")
    for k, (label, pts) in enumerate(overlays):
        color = PALETTE[k % len(PALETTE)]
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        out.append(f'<g fill="{color}" class="overlay">')
        for p in pts:
            x, y = tx(p)
            out.append(f'<circle cx="{x}" cy="{y}" r="{_fmt(radius)}"/>')
        out.append("</g>")
        ly = size + 14 + 18 * k
        out.append(f'<circle cx="{margin}" cy="{ly - 4}" r="4" fill="{color}"/>')
        out.append(f'<text x="{margin + 10}" y="{ly}" font-family="monospace" font-size="12">'
                   f'{_escape(str(label))} ({len(pts)})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
