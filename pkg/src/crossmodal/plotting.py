"""Minimal deterministic SVG plots: ROC curves and 2-D embedding scatters.

Plain text output, fixed float formatting, no raster dependencies, so
identical inputs produce byte-identical files.
"""

from __future__ import annotations

MARGIN = 50.0
SIZE = 480.0


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _header(width: float, height: float) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(width)}" '
            f'height="{int(height)}" viewBox="0 0 {int(width)} {int(height)}">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n')


def _axes(x_label: str, y_label: str) -> str:
    x0, y0 = MARGIN, MARGIN + SIZE
    x1, y1 = MARGIN + SIZE, MARGIN
    return (
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y0)}" stroke="black"/>\n'
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y1)}" stroke="black"/>\n'
        f'<text x="{_fmt(x0 + SIZE / 2)}" y="{_fmt(y0 + 35)}" text-anchor="middle" '
        f'font-size="14">{x_label}</text>\n'
        f'<text x="{_fmt(x0 - 35)}" y="{_fmt(y1 + SIZE / 2)}" text-anchor="middle" '
        f'font-size="14" transform="rotate(-90 {_fmt(x0 - 35)} {_fmt(y1 + SIZE / 2)})"'
        f'>{y_label}</text>\n')


def _to_px(x: float, y: float) -> tuple:
    return MARGIN + x * SIZE, MARGIN + SIZE - y * SIZE


def write_roc_svg(path, far, frr) -> None:
    """ROC as FAR (x) versus 1 - FRR (y), with the chance diagonal."""
    pts = sorted(((float(f), 1.0 - float(r)) for f, r in zip(far, frr)),
                 key=lambda p: (p[0], p[1]))
    poly = " ".join("{},{}".format(_fmt(px), _fmt(py))
                    for px, py in (_to_px(x, y) for x, y in pts))
    d0 = _to_px(0.0, 0.0)
    d1 = _to_px(1.0, 1.0)
    svg = _header(SIZE + 2 * MARGIN, SIZE + 2 * MARGIN)
    svg += _axes("false acceptance rate", "true acceptance rate")
    svg += (f'<line x1="{_fmt(d0[0])}" y1="{_fmt(d0[1])}" x2="{_fmt(d1[0])}" '
            f'y2="{_fmt(d1[1])}" stroke="#bbbbbb" stroke-dasharray="6,4"/>\n')
    svg += f'<polyline points="{poly}" fill="none" stroke="#d62728" stroke-width="2"/>\n'
    svg += "</svg>\n"
    with open(path, "w", newline="\n") as fh:
        fh.write(svg)


def _identity_color(identity_id: int) -> str:
    # Golden-angle hue walk keeps nearby ids visually distinct.
    hue = (identity_id * 137.50776405003785) % 360.0
    c = 0.55
    x = c * (1 - abs((hue / 60.0) % 2 - 1))
    sector = int(hue // 60) % 6
    rgb = [(c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)][sector]
    return "#" + "".join(f"{int(round((v + 0.35) * 255)):02x}" for v in rgb)


def write_scatter_svg(path, rows) -> None:
    """2-D projection scatter: color by identity, shape by modality.

    Circles are images, squares are audio.
    """
    xs = [r.x for r in rows]
    ys = [r.y for r in rows]
    span_x = max(xs) - min(xs) or 1.0
    span_y = max(ys) - min(ys) or 1.0
    svg = _header(SIZE + 2 * MARGIN, SIZE + 2 * MARGIN)
    svg += _axes("component 1", "component 2")
    for r in rows:
        nx = (r.x - min(xs)) / span_x
        ny = (r.y - min(ys)) / span_y
        px, py = _to_px(0.04 + 0.92 * nx, 0.04 + 0.92 * ny)
        color = _identity_color(r.identity_id)
        if r.modality == "audio":
            svg += (f'<rect x="{_fmt(px - 4)}" y="{_fmt(py - 4)}" width="8" height="8" '
                    f'fill="{color}" stroke="black" stroke-width="0.5"/>\n')
        else:
            svg += (f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="4.5" '
                    f'fill="{color}" stroke="black" stroke-width="0.5"/>\n')
    svg += "</svg>\n"
    with open(path, "w", newline="\n") as fh:
        fh.write(svg)
