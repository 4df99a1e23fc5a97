"""Static result figures: catalogue-vs-ANN scatter (SVG + PNG preview) and line-profile plots."""
import logging
import math
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import svgwrite
from PIL import Image, ImageDraw, ImageFont

from interfaces import EmptyInputError, EvalReport, LineProfile, StorageError

logger = logging.getLogger(__name__)

WIDTH = 520
HEIGHT = 520
MARGIN = 70
SERIES = (
    ("argmax", "ann_nm_argmax", "#1f77b4"),
    ("expect", "ann_nm_expect", "#ff7f0e"),
)


class _Axes:
    """Maps data-space nm onto canvas pixels (y grows upward in data space)."""

    def __init__(self, lo: float, hi: float, width: int = WIDTH, height: int = HEIGHT, margin: int = MARGIN):
        self.lo = lo
        self.hi = hi
        self.width = width
        self.height = height
        self.margin = margin

    def x(self, value: float) -> float:
        return self.margin + (value - self.lo) / (self.hi - self.lo) * (self.width - 2 * self.margin)

    def y(self, value: float) -> float:
        return self.height - self.margin - (value - self.lo) / (self.hi - self.lo) * (self.height - 2 * self.margin)

    def ticks(self, step: float) -> np.ndarray:
        return np.arange(math.ceil(self.lo / step) * step, self.hi + 1e-9, step)


def _scatter_axes(report: EvalReport) -> _Axes:
    values = [v for r in report.records for v in (r.catalogue_nm, r.ann_nm_argmax, r.ann_nm_expect)]
    hi = max(10.0, math.ceil(max(values) / 10.0) * 10.0 + 10.0)
    return _Axes(0.0, hi)


def _write_svg(dwg: svgwrite.Drawing, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            dwg.write(f, pretty=True)
    except OSError as e:
        raise StorageError(f"cannot write ({e.strerror})", path) from e


def _draw_frame(dwg: svgwrite.Drawing, axes: _Axes, x_label: str, y_label: str, tick_step: float) -> None:
    frame = dwg.add(dwg.g(id="axes", stroke="black", fill="none"))
    frame.add(dwg.line(start=(axes.x(axes.lo), axes.y(axes.lo)), end=(axes.x(axes.hi), axes.y(axes.lo))))
    frame.add(dwg.line(start=(axes.x(axes.lo), axes.y(axes.lo)), end=(axes.x(axes.lo), axes.y(axes.hi))))
    labels = dwg.add(dwg.g(id="labels", fill="black", font_size=12, font_family="sans-serif"))
    for tick in axes.ticks(tick_step):
        labels.add(dwg.text(f"{tick:g}", insert=(axes.x(tick) - 8, axes.y(axes.lo) + 18)))
        labels.add(dwg.text(f"{tick:g}", insert=(axes.x(axes.lo) - 36, axes.y(tick) + 4)))
    labels.add(dwg.text(x_label, insert=(axes.width / 2 - 40, axes.height - 20)))
    labels.add(dwg.text(y_label, insert=(16, axes.height / 2), transform=f"rotate(-90 16 {axes.height / 2})"))


def render_scatter_svg(report: EvalReport, path) -> Path:
    """One marker per record and decoder, with data-space coordinates in data-* attributes."""
    if not report.records:
        raise EmptyInputError("cannot plot a report without records")
    path = Path(path)
    axes = _scatter_axes(report)
    dwg = svgwrite.Drawing(str(path), size=(WIDTH, HEIGHT), debug=False)
    dwg.add(dwg.rect(insert=(0, 0), size=(WIDTH, HEIGHT), fill="white"))
    _draw_frame(dwg, axes, "Catalogue (nm)", "ANN (nm)", 50.0)

    identity = dwg.line(
        start=(axes.x(axes.lo), axes.y(axes.lo)),
        end=(axes.x(axes.hi), axes.y(axes.hi)),
        stroke="gray",
        stroke_dasharray="4,3",
        id="identity",
    )
    dwg.add(identity)

    for name, attribute, color in SERIES:
        group = dwg.add(dwg.g(id=f"series-{name}", fill=color, fill_opacity=0.75))
        for record in report.records:
            predicted = getattr(record, attribute)
            marker = dwg.circle(center=(axes.x(record.catalogue_nm), axes.y(predicted)), r=3.5)
            marker["class"] = f"marker {name}"
            marker["data-catalogue-nm"] = repr(float(record.catalogue_nm))
            marker["data-ann-nm"] = repr(float(predicted))
            group.add(marker)

    notes = dwg.add(dwg.g(id="annotations", font_size=12, font_family="sans-serif"))
    y = MARGIN - 40
    if report.detector is not None:
        notes.add(
            dwg.text(
                f"{report.detector.bit_depth}-bit detector, σ_noise = {report.detector.noise_figure:.4f}",
                insert=(MARGIN, y),
            )
        )
    notes.add(
        dwg.text(
            f"RMS argmax {report.rms_argmax:.3f} nm, expectation {report.rms_expect:.3f} nm",
            insert=(MARGIN, y + 16),
        )
    )
    for index, (name, _, color) in enumerate(SERIES):
        notes.add(dwg.circle(center=(WIDTH - MARGIN - 80, y - 4 + 16 * index), r=4, fill=color))
        notes.add(dwg.text(name, insert=(WIDTH - MARGIN - 70, y + 16 * index)))

    _write_svg(dwg, path)
    return path


def render_scatter_png(report: EvalReport, path) -> Path:
    """Raster preview of the scatter plot."""
    if not report.records:
        raise EmptyInputError("cannot plot a report without records")
    path = Path(path)
    axes = _scatter_axes(report)
    image = Image.new("RGB", (WIDTH, HEIGHT), "white")
    draw = ImageDraw.Draw(image)
    font = ImageFont.load_default()

    draw.line([(axes.x(axes.lo), axes.y(axes.lo)), (axes.x(axes.hi), axes.y(axes.lo))], fill="black")
    draw.line([(axes.x(axes.lo), axes.y(axes.lo)), (axes.x(axes.lo), axes.y(axes.hi))], fill="black")
    draw.line([(axes.x(axes.lo), axes.y(axes.lo)), (axes.x(axes.hi), axes.y(axes.hi))], fill="gray")
    for tick in axes.ticks(50.0):
        draw.text((axes.x(tick) - 8, axes.y(axes.lo) + 6), f"{tick:g}", fill="black", font=font)
        draw.text((axes.x(axes.lo) - 30, axes.y(tick) - 5), f"{tick:g}", fill="black", font=font)
    draw.text((WIDTH / 2 - 40, HEIGHT - 24), "Catalogue (nm)", fill="black", font=font)
    draw.text((8, MARGIN - 24), "ANN (nm)", fill="black", font=font)

    for _, attribute, color in SERIES:
        for record in report.records:
            cx, cy = axes.x(record.catalogue_nm), axes.y(getattr(record, attribute))
            draw.ellipse([cx - 3, cy - 3, cx + 3, cy + 3], fill=color)

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        image.save(path, format="PNG")
    except OSError as e:
        raise StorageError(f"cannot write ({e})", path) from e
    return path


def emit_profile_plot(
    clean: LineProfile, noisy: Optional[LineProfile], path, pixel_range: Tuple[int, int] = (0, 200)
) -> Path:
    """Intensity against pixel index for a clean profile and, optionally, its noisy counterpart."""
    path = Path(path)
    start, stop = pixel_range
    stop = min(stop, len(clean))
    if stop <= start:
        raise EmptyInputError("pixel range selects no samples")
    peak = max(1.0, float(noisy.samples[start:stop].max()) if noisy is not None else 1.0)

    width, height, margin = 720, 360, 60

    def point(k: int, value: float) -> Tuple[float, float]:
        px = margin + (k - start) / max(stop - 1 - start, 1) * (width - 2 * margin)
        py = height - margin - value / peak * (height - 2 * margin)
        return round(px, 3), round(py, 3)

    dwg = svgwrite.Drawing(str(path), size=(width, height), debug=False)
    dwg.add(dwg.rect(insert=(0, 0), size=(width, height), fill="white"))
    frame = dwg.add(dwg.g(stroke="black", fill="none"))
    frame.add(dwg.line(start=point(start, 0.0), end=point(stop - 1, 0.0)))
    frame.add(dwg.line(start=point(start, 0.0), end=point(start, peak)))

    series: Sequence[Tuple[str, LineProfile, str]] = [("clean", clean, "#1f77b4")]
    if noisy is not None:
        series = [*series, ("noisy", noisy, "#d62728")]
    for name, profile, color in series:
        points = [point(k, float(profile.samples[k])) for k in range(start, stop)]
        line = dwg.polyline(points=points, stroke=color, fill="none", stroke_width=1)
        line["class"] = f"profile {name}"
        dwg.add(line)

    labels = dwg.add(dwg.g(font_size=12, font_family="sans-serif"))
    labels.add(dwg.text(f"Line profile, T = {clean.thickness.value:g} nm", insert=(margin, margin - 24)))
    labels.add(dwg.text("pixel", insert=(width / 2, height - 16)))
    labels.add(dwg.text("intensity", insert=(8, margin - 8)))

    _write_svg(dwg, path)
    return path
