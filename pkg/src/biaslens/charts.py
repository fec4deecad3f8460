"""Self-contained SVG charts.

Every plotted mark carries its exact value in ``data-*`` attributes so
tests can read numbers back without reverse-engineering pixel positions.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from datetime import date
from pathlib import Path
from typing import Sequence

WIDTH, HEIGHT = 760, 360
MARGIN = {"left": 60, "right": 150, "top": 40, "bottom": 50}
PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _root(title: str) -> ET.Element:
    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "width": str(WIDTH),
            "height": str(HEIGHT),
            "viewBox": f"0 0 {WIDTH} {HEIGHT}",
            "font-family": "sans-serif",
            "font-size": "11",
        },
    )
    ET.SubElement(svg, "title").text = title
    heading = ET.SubElement(svg, "text", {"x": str(WIDTH // 2), "y": "20", "text-anchor": "middle", "font-size": "14"})
    heading.text = title
    return svg


def _write(svg: ET.Element, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ET.indent(svg)
    path.write_text(ET.tostring(svg, encoding="unicode") + "\n", encoding="utf-8")
    return path


def placeholder(title: str, path: str | Path) -> Path:
    svg = _root(title)
    note = ET.SubElement(
        svg, "text",
        {"class": "placeholder", "x": str(WIDTH // 2), "y": str(HEIGHT // 2), "text-anchor": "middle"},
    )
    note.text = "no data"
    return _write(svg, path)


def _nice_max(value: float) -> float:
    if value <= 0:
        return 1.0
    return math.ceil(value * 10 - 1e-9) / 10


class _YAxis:
    def __init__(self, lo: float, hi: float):
        self.lo, self.hi = lo, hi
        self.top = MARGIN["top"]
        self.bottom = HEIGHT - MARGIN["bottom"]

    def __call__(self, v: float) -> float:
        return self.bottom - (v - self.lo) / (self.hi - self.lo) * (self.bottom - self.top)

    def draw(self, svg: ET.Element, ticks: int = 4) -> None:
        axis = ET.SubElement(svg, "g", {"class": "y-axis"})
        x0 = MARGIN["left"]
        ET.SubElement(axis, "line", {"x1": str(x0), "x2": str(x0), "y1": _fmt(self.top),
                                     "y2": _fmt(self.bottom), "stroke": "#333"})
        for i in range(ticks + 1):
            v = self.lo + (self.hi - self.lo) * i / ticks
            y = self(v)
            ET.SubElement(axis, "line", {"x1": str(x0 - 4), "x2": str(WIDTH - MARGIN["right"]),
                                         "y1": _fmt(y), "y2": _fmt(y), "stroke": "#ddd"})
            label = ET.SubElement(axis, "text", {"x": str(x0 - 6), "y": _fmt(y + 4), "text-anchor": "end"})
            label.text = f"{v:.2f}"


def _legend(svg: ET.Element, names: Sequence[str]) -> None:
    legend = ET.SubElement(svg, "g", {"class": "legend"})
    x = WIDTH - MARGIN["right"] + 12
    for i, name in enumerate(names):
        y = MARGIN["top"] + 16 * i
        ET.SubElement(legend, "rect", {"x": str(x), "y": str(y), "width": "10", "height": "10",
                                       "fill": PALETTE[i % len(PALETTE)]})
        text = ET.SubElement(legend, "text", {"x": str(x + 14), "y": str(y + 9)})
        text.text = name


def bar_chart(
    groups: Sequence[tuple[str, Sequence[tuple[str, float]]]],
    title: str,
    path: str | Path,
    *,
    y_range: tuple[float, float] | None = None,
) -> Path:
    """Grouped bars; ``groups`` is ``[(group, [(bar, value), ...]), ...]``."""
    if not groups or not any(bars for _, bars in groups):
        return placeholder(title, path)
    values = [v for _, bars in groups for _, v in bars]
    lo, hi = y_range or (min(0.0, min(values)), _nice_max(max(values)))
    y = _YAxis(lo, hi)
    svg = _root(title)
    y.draw(svg)
    bar_names = list(dict.fromkeys(name for _, bars in groups for name, _ in bars))
    plot_w = WIDTH - MARGIN["left"] - MARGIN["right"]
    group_w = plot_w / len(groups)
    bar_w = group_w * 0.8 / max(1, len(bar_names))
    body = ET.SubElement(svg, "g", {"class": "bars"})
    for gi, (group, bars) in enumerate(groups):
        gx = MARGIN["left"] + gi * group_w + group_w * 0.1
        for name, value in bars:
            bi = bar_names.index(name)
            y0, y1 = sorted((y(value), y(0.0) if lo <= 0 <= hi else y(lo)))
            ET.SubElement(body, "rect", {
                "class": "bar",
                "x": _fmt(gx + bi * bar_w), "y": _fmt(y0),
                "width": _fmt(bar_w * 0.95), "height": _fmt(max(y1 - y0, 0.0)),
                "fill": PALETTE[bi % len(PALETTE)],
                "data-group": group, "data-bar": name, "data-value": repr(float(value)),
            })
        label = ET.SubElement(svg, "text", {"x": _fmt(gx + group_w * 0.4), "y": str(HEIGHT - MARGIN["bottom"] + 16),
                                            "text-anchor": "middle", "class": "group-label"})
        label.text = group
    _legend(svg, bar_names)
    return _write(svg, path)


def line_chart(
    series: Sequence[tuple[str, Sequence[tuple[date, float, int]]]],
    title: str,
    path: str | Path,
    *,
    events: Sequence[tuple[date, str]] = (),
    y_range: tuple[float, float] = (-1.0, 1.0),
) -> Path:
    """One polyline plus point markers per series; events as vertical rules.

    Events outside the plotted date span are not drawn.
    """
    series = [(name, pts) for name, pts in series if pts]
    if not series:
        return placeholder(title, path)
    days = [d.toordinal() for _, pts in series for d, _, _ in pts]
    x_lo, x_hi = min(days), max(days)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 3, x_hi + 3
    plot_l, plot_r = MARGIN["left"], WIDTH - MARGIN["right"]

    def x(d: date) -> float:
        return plot_l + (d.toordinal() - x_lo) / (x_hi - x_lo) * (plot_r - plot_l)

    y = _YAxis(*y_range)
    svg = _root(title)
    y.draw(svg)
    zero = ET.SubElement(svg, "line", {"class": "zero", "x1": str(plot_l), "x2": str(plot_r),
                                       "y1": _fmt(y(0.0)), "y2": _fmt(y(0.0)), "stroke": "#999"})
    zero.set("stroke-dasharray", "4 3")
    for label_day in (x_lo, x_hi):
        tick = ET.SubElement(svg, "text", {"x": _fmt(plot_l if label_day == x_lo else plot_r),
                                           "y": str(HEIGHT - MARGIN["bottom"] + 16), "text-anchor": "middle"})
        tick.text = date.fromordinal(label_day).isoformat()

    for event_day, caption in events:
        if not x_lo <= event_day.toordinal() <= x_hi:
            continue
        ex = x(event_day)
        g = ET.SubElement(svg, "g", {"class": "event", "data-date": event_day.isoformat(), "data-caption": caption})
        ET.SubElement(g, "line", {"class": "event-marker", "x1": _fmt(ex), "x2": _fmt(ex),
                                  "y1": _fmt(y.top), "y2": _fmt(y.bottom), "stroke": "#555",
                                  "stroke-dasharray": "2 2", "data-date": event_day.isoformat(),
                                  "data-caption": caption})
        text = ET.SubElement(g, "text", {"x": _fmt(ex + 3), "y": _fmt(y.top + 10), "font-size": "9"})
        text.text = caption

    for i, (name, pts) in enumerate(series):
        colour = PALETTE[i % len(PALETTE)]
        g = ET.SubElement(svg, "g", {"class": "series-group", "data-series": name})
        coords = " ".join(f"{_fmt(x(d))},{_fmt(y(v))}" for d, v, _ in pts)
        ET.SubElement(g, "polyline", {"class": "series", "data-series": name, "points": coords,
                                      "fill": "none", "stroke": colour, "stroke-width": "1.5"})
        for d, v, n in pts:
            ET.SubElement(g, "circle", {
                "class": "point", "cx": _fmt(x(d)), "cy": _fmt(y(v)), "r": "2.5", "fill": colour,
                "data-series": name, "data-x": d.isoformat(), "data-y": repr(float(v)), "data-n": str(n),
            })
    _legend(svg, [name for name, _ in series])
    return _write(svg, path)
