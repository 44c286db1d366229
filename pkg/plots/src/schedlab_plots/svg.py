"""Minimal deterministic SVG construction.

Pure string building with fixed number formatting: identical draw calls give
byte-identical documents, which is the whole point — figures must be stable
across runs and machines.
"""

from __future__ import annotations

WIDTH = 640
HEIGHT = 400
MARGIN_LEFT = 60
MARGIN_RIGHT = 20
MARGIN_TOP = 40
MARGIN_BOTTOM = 50

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]

FONT = "font-family=\"sans-serif\""


def fmt(x: float) -> str:
    """Fixed-precision coordinate/value text (no scientific notation drift)."""
    text = f"{x:.4f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def color(index: int) -> str:
    return PALETTE[index % len(PALETTE)]


class Scale:
    """Affine map from data range to pixel range."""

    def __init__(self, lo: float, hi: float, pix_lo: float, pix_hi: float):
        if hi <= lo:  # degenerate data range: pad so points land mid-plot
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi = lo, hi
        self.pix_lo, self.pix_hi = pix_lo, pix_hi

    def __call__(self, v: float) -> float:
        frac = (v - self.lo) / (self.hi - self.lo)
        return self.pix_lo + frac * (self.pix_hi - self.pix_lo)


class Canvas:
    def __init__(self, title: str):
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-size="16" {FONT}>{title}</text>',
        ]

    def open_group(self, css_class: str) -> None:
        self.parts.append(f'<g class="{css_class}">')

    def close_group(self) -> None:
        self.parts.append("</g>")

    def line(self, x1, y1, x2, y2, stroke="black", width=1.0, dash=None) -> None:
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{fmt(x1)}" y1="{fmt(y1)}" x2="{fmt(x2)}" y2="{fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{fmt(width)}"{d}/>')

    def polyline(self, points, stroke, width=1.5, dash=None) -> None:
        pts = " ".join(f"{fmt(x)},{fmt(y)}" for x, y in points)
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{fmt(width)}"{d}/>')

    def circle(self, x, y, r, fill) -> None:
        self.parts.append(
            f'<circle cx="{fmt(x)}" cy="{fmt(y)}" r="{fmt(r)}" fill="{fill}"/>')

    def rect(self, x, y, w, h, fill) -> None:
        self.parts.append(
            f'<rect x="{fmt(x)}" y="{fmt(y)}" width="{fmt(w)}" '
            f'height="{fmt(h)}" fill="{fill}"/>')

    def text(self, x, y, content, size=11, anchor="middle", fill="black") -> None:
        self.parts.append(
            f'<text x="{fmt(x)}" y="{fmt(y)}" text-anchor="{anchor}" '
            f'font-size="{size}" {FONT} fill="{fill}">{content}</text>')

    def axes(self, x_scale: Scale, y_scale: Scale, x_label: str, y_label: str) -> None:
        x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
        y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
        self.line(x0, y0, x1, y0)
        self.line(x0, y0, x0, y1)
        self.text((x0 + x1) / 2, HEIGHT - 12, x_label)
        self.text(16, (y0 + y1) / 2, y_label, anchor="middle")
        # min/max tick labels anchor the reader without a full tick engine
        self.text(x0, y0 + 16, fmt(x_scale.lo))
        self.text(x1, y0 + 16, fmt(x_scale.hi))
        self.text(x0 - 6, y0 + 4, fmt(y_scale.lo), anchor="end")
        self.text(x0 - 6, y1 + 4, fmt(y_scale.hi), anchor="end")

    def legend(self, entries: list[tuple[str, str]]) -> None:
        """entries: (label, color), drawn top-right inside the plot box."""
        x = WIDTH - MARGIN_RIGHT - 130
        y = MARGIN_TOP + 8
        for i, (label, col) in enumerate(entries):
            yy = y + 16 * i
            self.line(x, yy, x + 22, yy, stroke=col, width=2)
            self.text(x + 28, yy + 4, label, anchor="start")

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def plot_box() -> tuple[float, float, float, float]:
    """(x_pix_lo, x_pix_hi, y_pix_lo, y_pix_hi) with y inverted for SVG."""
    return (MARGIN_LEFT, WIDTH - MARGIN_RIGHT,
            HEIGHT - MARGIN_BOTTOM, MARGIN_TOP)
