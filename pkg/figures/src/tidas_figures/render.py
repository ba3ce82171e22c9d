"""Figure rendering: deterministic SVG output from the experiment CSVs.

Every renderer is a pure reader of its input file; styling follows the solid
DAS vs dashed tiDAS convention and output bytes are reproducible (fixed hash
salt, no timestamps).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .io import (
    BOX_COLUMNS,
    LINE_COLUMNS,
    PEAK_FWHM_COLUMNS,
    SchemaError,
    read_matrix,
    read_table,
)

FIGURE_KINDS = ("peak_fwhm", "fwhm_box", "theta_heatmap", "error_map", "line_overlay")

DAS_STYLE = dict(color="black", linestyle="-", linewidth=1.2, label="DAS")
TIDAS_STYLE = dict(color="tab:red", linestyle="--", linewidth=1.2, label="tiDAS")
CONTOUR_GID = "five-percent-contour"


@dataclass(frozen=True)
class FigureSpec:
    input_csv: Path
    figure_kind: str
    output_path: Path

    def __post_init__(self) -> None:
        if self.figure_kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.figure_kind!r}")
        if not Path(self.input_csv).exists():
            raise SchemaError(f"input file {self.input_csv} does not exist")


def _new_figure(width=6.4, height=4.8) -> Figure:
    fig = Figure(figsize=(width, height))
    FigureCanvasSVG(fig)
    return fig


def _save(fig: Figure, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": "tidas-figures"}):
        if path.suffix.lower() == ".svg":
            # byte-deterministic: fixed hash salt, no creation date
            fig.savefig(path, format="svg", metadata={"Date": None})
        else:
            fig.savefig(path, dpi=150)
    return path


def render_peak_fwhm(input_csv: Path, output_path: Path) -> Path:
    data = read_table(input_csv, PEAK_FWHM_COLUMNS)
    groups = sorted(set(zip(data["frequency_hz"], data["tx_focus_m"])))
    fig = _new_figure(height=2.6 * len(groups) + 0.8)
    axes = fig.subplots(len(groups), 2, squeeze=False)
    for row, (freq, focus) in enumerate(groups):
        mask = (data["frequency_hz"] == freq) & (data["tx_focus_m"] == focus)
        depth_mm = data["depth_m"][mask] * 1e3
        ax = axes[row][0]
        ax.plot(depth_mm, data["das_peak_norm"][mask], **DAS_STYLE)
        ax.plot(depth_mm, data["tidas_peak_norm"][mask], **TIDAS_STYLE)
        ax.axvline(focus * 1e3, color="tab:blue", linewidth=0.8)
        ax.set_ylabel("normalized peak")
        ax.set_title(f"{freq / 1e6:g} MHz, focus {focus * 1e3:g} mm", fontsize=9)
        ax.legend(fontsize=7)
        ax = axes[row][1]
        ax.plot(depth_mm, data["abs_fwhm_diff_s"][mask] * 1e9, color="tab:purple", linewidth=1.0)
        ax.axvline(focus * 1e3, color="tab:blue", linewidth=0.8)
        ax.set_ylabel("|dFWHM| (ns)")
    for ax in axes[-1]:
        ax.set_xlabel("depth (mm)")
    fig.tight_layout()
    return _save(fig, output_path)


def render_fwhm_box(input_csv: Path, output_path: Path) -> Path:
    data = read_table(input_csv, BOX_COLUMNS)
    fig = _new_figure()
    ax = fig.subplots()
    stats = []
    labels = []
    for i in range(len(data["median_s"])):
        stats.append(
            dict(
                med=data["median_s"][i] * 1e9,
                q1=data["q1_s"][i] * 1e9,
                q3=data["q3_s"][i] * 1e9,
                whislo=data["whisker_lo_s"][i] * 1e9,
                whishi=data["whisker_hi_s"][i] * 1e9,
                fliers=[],
            )
        )
        labels.append(
            f"{data['frequency_hz'][i] / 1e6:g} MHz\n{data['tx_focus_m'][i] * 1e3:g} mm"
        )
    ax.bxp(stats, showfliers=False)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("|FWHM difference| (ns)")
    ax.set_title("FWHM differences per configuration")
    fig.tight_layout()
    return _save(fig, output_path)


def render_theta_heatmap(input_csv: Path, output_path: Path) -> Path:
    refs, targets, values = read_matrix(input_csv)
    fig = _new_figure()
    ax = fig.subplots()
    image = ax.imshow(
        values,
        origin="lower",
        aspect="auto",
        extent=(targets[0] * 1e3, targets[-1] * 1e3, refs[0] * 1e3, refs[-1] * 1e3),
        cmap="viridis",
    )
    ax.set_xlabel("reconstruction depth (mm)")
    ax.set_ylabel("reference depth (mm)")
    ax.set_title("scaling weights")
    fig.colorbar(image, ax=ax, label="theta")
    fig.tight_layout()
    return _save(fig, output_path)


def render_error_map(input_csv: Path, output_path: Path) -> Path:
    refs, targets, values = read_matrix(input_csv)
    fig = _new_figure()
    ax = fig.subplots()
    with np.errstate(invalid="ignore"):
        shown = np.log10(np.clip(values, 1e-12, None))
    image = ax.imshow(
        shown,
        origin="lower",
        aspect="auto",
        extent=(targets[0] * 1e3, targets[-1] * 1e3, refs[0] * 1e3, refs[-1] * 1e3),
        cmap="magma",
    )
    contour = ax.contour(
        targets * 1e3,
        refs * 1e3,
        values,
        levels=[0.05],
        colors="tab:blue",
        linewidths=1.2,
    )
    contour.set_gid(CONTOUR_GID)
    ax.set_xlabel("scatterer depth (mm)")
    ax.set_ylabel("reference depth (mm)")
    ax.set_title("reconstruction error (log10), 5% contour in blue")
    fig.colorbar(image, ax=ax, label="log10 error")
    fig.tight_layout()
    return _save(fig, output_path)


def render_line_overlay(input_csv: Path, output_path: Path) -> Path:
    data = read_table(input_csv, LINE_COLUMNS)
    fig = _new_figure()
    ax = fig.subplots()
    depth_mm = data["depth_m"] * 1e3
    ax.plot(depth_mm, data["das"], **DAS_STYLE)
    ax.plot(depth_mm, data["tidas"], **TIDAS_STYLE)
    ax.set_xlabel("depth (mm)")
    ax.set_ylabel("amplitude")
    ax.set_title(Path(input_csv).stem.replace("_", " "))
    ax.legend()
    fig.tight_layout()
    return _save(fig, output_path)


RENDERERS = {
    "peak_fwhm": render_peak_fwhm,
    "fwhm_box": render_fwhm_box,
    "theta_heatmap": render_theta_heatmap,
    "error_map": render_error_map,
    "line_overlay": render_line_overlay,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure; raises SchemaError on any input mismatch."""
    return RENDERERS[spec.figure_kind](Path(spec.input_csv), Path(spec.output_path))
