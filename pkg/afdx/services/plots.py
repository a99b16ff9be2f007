"""
afd-explorer - SVG Plot Service

Static line/scatter charts rendered from a jinja2 template. Plots only show
the series they are given.
"""
import math
from typing import Sequence

from jinja2 import Environment, PackageLoader, select_autoescape

_jinja_env = Environment(
    loader=PackageLoader("afdx", "templates"),
    autoescape=select_autoescape(["svg", "svg.j2"]),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 70, "right": 160, "top": 40, "bottom": 55}


def fmt_number(value: float) -> str:
    """Compact tick label."""
    if value == 0:
        return "0"
    magnitude = abs(value)
    for suffix, scale in (("G", 1e9), ("M", 1e6), ("k", 1e3)):
        if magnitude >= scale:
            return f"{value / scale:.3g}{suffix}"
    return f"{value:.3g}"


_jinja_env.filters["num"] = fmt_number


def _ticks(low: float, high: float, count: int = 5) -> list[float]:
    if high <= low:
        return [low]
    step = (high - low) / (count - 1)
    return [low + i * step for i in range(count)]


def render_chart(
    series: dict[str, Sequence[tuple[float, float]]],
    title: str,
    x_label: str,
    y_label: str,
    markers: Sequence[tuple[float, float]] = (),
    log_x: bool = False,
) -> str:
    """
    Render named (x, y) series as polylines, plus optional unconnected markers.

    Returns:
        SVG document text
    """
    points = [pt for pts in series.values() for pt in pts] + list(markers)
    finite = [(x, y) for x, y in points if math.isfinite(x) and math.isfinite(y) and (x > 0 or not log_x)]
    xs = [math.log10(x) if log_x else x for x, _ in finite] or [0.0, 1.0]
    ys = [y for _, y in finite] or [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(0.0, min(ys)), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1

    plot_w = WIDTH - MARGIN["left"] - MARGIN["right"]
    plot_h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x: float) -> float:
        v = math.log10(x) if log_x else x
        return round(MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * plot_w, 2)

    def sy(y: float) -> float:
        return round(MARGIN["top"] + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h, 2)

    def usable(x: float, y: float) -> bool:
        return math.isfinite(x) and math.isfinite(y) and (x > 0 or not log_x)

    lines = [
        {
            "name": name,
            "color": PALETTE[i % len(PALETTE)],
            "points": " ".join(f"{sx(x)},{sy(y)}" for x, y in pts if usable(x, y)),
        }
        for i, (name, pts) in enumerate(series.items())
    ]
    x_ticks = [
        {"pos": sx(10 ** v if log_x else v), "label": 10 ** v if log_x else v}
        for v in _ticks(x_lo, x_hi)
    ]
    y_ticks = [{"pos": sy(v), "label": v} for v in _ticks(y_lo, y_hi)]
    dots = [{"x": sx(x), "y": sy(y)} for x, y in markers if usable(x, y)]

    template = _jinja_env.get_template("line_chart.svg.j2")
    return template.render(
        width=WIDTH,
        height=HEIGHT,
        margin=MARGIN,
        plot_w=plot_w,
        plot_h=plot_h,
        title=title,
        x_label=x_label,
        y_label=y_label,
        lines=lines,
        markers=dots,
        x_ticks=x_ticks,
        y_ticks=y_ticks,
    )
