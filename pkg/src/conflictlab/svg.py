"""Minimal SVG plots of a weak-informativity surface (rects, paths and text only)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

# viridis anchors
_ANCHORS = np.array(
    [
        [68, 1, 84],
        [59, 82, 139],
        [33, 145, 140],
        [94, 201, 98],
        [253, 231, 37],
    ],
    dtype=float,
)

WIDTH, HEIGHT = 560, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 110, 30, 60


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_ANCHORS) - 1)
    i = min(int(t), len(_ANCHORS) - 2)
    c = _ANCHORS[i] + (t - i) * (_ANCHORS[i + 1] - _ANCHORS[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    return np.linspace(lo, hi, n)


def _header() -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]


def _axes(x_lo, x_hi, y_lo, y_hi, x_label, y_label) -> list[str]:
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = [f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(x_lo, x_hi):
        x = LEFT + (v - x_lo) / (x_hi - x_lo) * pw
        out.append(f'<path d="M{x:.2f} {TOP + ph} v5" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _ticks(y_lo, y_hi):
        y = TOP + ph - (v - y_lo) / (y_hi - y_lo) * ph
        out.append(f'<path d="M{LEFT} {y:.2f} h-5" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(
        f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(x_label)}</text>'
    )
    out.append(
        f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + ph / 2:.1f})">{escape(y_label)}</text>'
    )
    return out


def line_svg(gamma: np.ndarray, w: np.ndarray, x_label: str = "γ", y_label: str = "W_α") -> str:
    """Line plot of W against a scalar gamma."""
    order = np.argsort(gamma)
    g, v = np.asarray(gamma, float)[order], np.asarray(w, float)[order]
    x_lo, x_hi = float(g.min()), float(g.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_lo, y_hi = min(float(v.min()), 0.0), max(float(v.max()), 1.0)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    xs = LEFT + (g - x_lo) / (x_hi - x_lo) * pw
    ys = TOP + ph - (v - y_lo) / (y_hi - y_lo) * ph
    d = "M" + " L".join(f"{x:.2f} {y:.2f}" for x, y in zip(xs, ys))
    out = _header() + _axes(x_lo, x_hi, y_lo, y_hi, x_label, y_label)
    out.append(f'<path d="{d}" fill="none" stroke="#3b528b" stroke-width="2"/>')
    for x, y in zip(xs, ys):
        out.append(f'<rect x="{x - 2.5:.2f}" y="{y - 2.5:.2f}" width="5" height="5" fill="#3b528b"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap_svg(
    points: np.ndarray,
    w: np.ndarray,
    grid_shape: tuple[int, int] | None = None,
    labels: tuple[str, str] = ("γ₁", "γ₂"),
    floor: float = -1.0,
) -> str:
    """Filled heatmap of W over a 2-D gamma grid.

    Values below ``floor`` share the lowest colour.  Without a grid shape
    (space-filling designs) each point is drawn as a small square.
    """
    pts = np.asarray(points, float)
    v = np.asarray(w, float)
    x_lo, x_hi = float(pts[:, 0].min()), float(pts[:, 0].max())
    y_lo, y_hi = float(pts[:, 1].min()), float(pts[:, 1].max())
    c_lo = max(float(v.min()), floor)
    c_hi = max(float(v.max()), c_lo + 1e-9)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    if grid_shape is not None:
        nx, ny = grid_shape
        cw, ch = pw / nx, ph / ny
        # cell centres sit on the grid values
        xs = np.unique(pts[:, 0])
        ys = np.unique(pts[:, 1])
        x_lo -= (xs[1] - xs[0]) / 2 if xs.size > 1 else 0.5
        x_hi += (xs[-1] - xs[-2]) / 2 if xs.size > 1 else 0.5
        y_lo -= (ys[1] - ys[0]) / 2 if ys.size > 1 else 0.5
        y_hi += (ys[-1] - ys[-2]) / 2 if ys.size > 1 else 0.5
    else:
        cw = ch = 8.0
        pad_x, pad_y = 0.02 * (x_hi - x_lo or 1.0), 0.02 * (y_hi - y_lo or 1.0)
        x_lo, x_hi, y_lo, y_hi = x_lo - pad_x, x_hi + pad_x, y_lo - pad_y, y_hi + pad_y
    out = _header()
    for (gx, gy), val in zip(pts, v):
        cx = LEFT + (gx - x_lo) / (x_hi - x_lo) * pw
        cy = TOP + ph - (gy - y_lo) / (y_hi - y_lo) * ph
        colour = _color((max(val, c_lo) - c_lo) / (c_hi - c_lo))
        out.append(
            f'<rect x="{cx - cw / 2:.2f}" y="{cy - ch / 2:.2f}" width="{cw:.2f}" '
            f'height="{ch:.2f}" fill="{colour}"/>'
        )
    out += _axes(x_lo, x_hi, y_lo, y_hi, *labels)
    # colour bar
    bx, bw = WIDTH - RIGHT + 25, 18
    steps = 50
    for i in range(steps):
        y = TOP + ph - (i + 1) * ph / steps
        out.append(
            f'<rect x="{bx}" y="{y:.2f}" width="{bw}" height="{ph / steps + 0.5:.2f}" '
            f'fill="{_color((i + 0.5) / steps)}"/>'
        )
    out.append(f'<rect x="{bx}" y="{TOP}" width="{bw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _ticks(c_lo, c_hi):
        y = TOP + ph - (t - c_lo) / (c_hi - c_lo) * ph
        out.append(f'<text x="{bx + bw + 4}" y="{y + 4:.2f}">{_fmt(t)}</text>')
    out.append(f'<text x="{bx}" y="{TOP - 10}">W_α</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
