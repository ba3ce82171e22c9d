"""Signal-quality measurements: envelope, peak, FWHM, errors, side-lobe statistics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import hilbert

from .das import Trace

__all__ = [
    "MetricsReport",
    "envelope",
    "width_at_half_max",
    "fwhm",
    "peak_time",
    "window_bounds",
    "local_error",
    "global_error",
    "sidelobe_stats",
    "write_reports",
]

DB_FLOOR = -120.0


def envelope(trace: Trace) -> Trace:
    """Magnitude of the analytic signal."""
    if len(trace) < 4:
        raise ValueError("envelope needs at least 4 samples")
    return Trace(np.abs(hilbert(trace.samples)), trace.sampling_frequency, trace.t0)


def width_at_half_max(samples: np.ndarray, sampling_frequency: float) -> float:
    """Width between the half-max crossings nearest the peak of ``samples``.

    Crossings are located with linear sub-sample interpolation; raises when the
    curve never drops below half max on one side of the peak.
    """
    samples = np.asarray(samples, dtype=float)
    peak_idx = int(np.argmax(samples))
    half = samples[peak_idx] / 2.0
    if half <= 0:
        raise ValueError("degenerate signal: non-positive maximum")

    left = None
    for i in range(peak_idx, 0, -1):
        if samples[i - 1] < half <= samples[i]:
            frac = (half - samples[i - 1]) / (samples[i] - samples[i - 1])
            left = (i - 1) + frac
            break
    right = None
    for i in range(peak_idx, len(samples) - 1):
        if samples[i] >= half > samples[i + 1]:
            frac = (samples[i] - half) / (samples[i] - samples[i + 1])
            right = i + frac
            break
    if left is None or right is None:
        raise ValueError("envelope never crosses half max on one side of the peak")
    return (right - left) / sampling_frequency


def fwhm(trace: Trace) -> float:
    """Full width at half maximum of the trace envelope, in seconds."""
    return width_at_half_max(envelope(trace).samples, trace.sampling_frequency)


def peak_time(trace: Trace) -> Tuple[float, float]:
    """(time, amplitude) of the envelope maximum."""
    env = envelope(trace).samples
    idx = int(np.argmax(env))
    return trace.t0 + idx / trace.sampling_frequency, float(env[idx])


def window_bounds(n: int, t0: float, fs: float, center: float, half_width: float) -> Tuple[int, int]:
    """Half-open sample range [lo, hi) whose times fall inside center +/- half_width."""
    lo = int(np.ceil((center - half_width - t0) * fs - 1e-9))
    hi = int(np.floor((center + half_width - t0) * fs + 1e-9))
    return max(lo, 0), min(hi, n - 1) + 1


def _window_slice(trace: Trace, center: float, half_width: float) -> slice:
    lo, hi = window_bounds(len(trace.samples), trace.t0, trace.sampling_frequency, center, half_width)
    if hi <= lo:
        raise ValueError("window does not overlap the trace support")
    return slice(lo, hi)


def local_error(reference: Trace, candidate: Trace, window) -> float:
    """Relative squared l2 error of candidate vs reference inside ``window``."""
    if len(reference) != len(candidate):
        raise ValueError("traces must share one time axis")
    sl = _window_slice(reference, window.center, window.half_width)
    ref = reference.samples[sl]
    cand = candidate.samples[sl]
    denom = float(np.sum(ref * ref))
    if denom == 0.0:
        raise ValueError("reference carries no energy inside the window")
    return float(np.sum((cand - ref) ** 2)) / denom


def global_error(reference: Trace, candidate: Trace) -> float:
    """Relative squared l2 error over the whole signal duration."""
    if len(reference) != len(candidate):
        raise ValueError("traces must share one time axis")
    denom = float(np.sum(reference.samples**2))
    if denom == 0.0:
        raise ValueError("reference carries no energy")
    return float(np.sum((candidate.samples - reference.samples) ** 2)) / denom


def _mainlobe_mask(n: int, depths: np.ndarray, scatterer_depths: Sequence[float], guard: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for z in scatterer_depths:
        if z < depths[0] or z > depths[-1]:
            raise ValueError(f"scatterer depth {z} outside the reconstruction grid")
        center = int(np.argmin(np.abs(depths - z)))
        mask[max(center - guard, 0) : center + guard + 1] = True
    return mask


def sidelobe_stats(
    line: np.ndarray,
    depths: np.ndarray,
    scatterer_depths: Sequence[float],
    guard: int,
    reference: Optional[np.ndarray] = None,
) -> Tuple[float, Optional[float]]:
    """Mean side-lobe level of ``line`` and, given ``reference``, the relative error.

    Main lobes are +/- ``guard`` grid samples around each scatterer; the side-lobe
    level is the mean envelope amplitude outside them, in dB relative to the
    main-lobe peak (floored at -120 dB). The relative error compares the
    peak-normalized linear-scale means of candidate and reference.
    """
    line = np.asarray(line, dtype=float)
    depths = np.asarray(depths, dtype=float)
    main = _mainlobe_mask(len(line), depths, scatterer_depths, guard)
    if main.all():
        raise ValueError("main-lobe regions consume the whole line; reduce the guard")

    def normalized_mean_sl(values: np.ndarray) -> float:
        peak = float(np.max(values[main]))
        if peak <= 0:
            raise ValueError("main-lobe region carries no signal")
        return float(np.mean(np.abs(values[~main]))) / peak

    mean_sl = normalized_mean_sl(line)
    mean_sl_db = 20.0 * np.log10(mean_sl) if mean_sl > 0 else DB_FLOOR
    mean_sl_db = max(mean_sl_db, DB_FLOOR)

    rel = None
    if reference is not None:
        ref_sl = normalized_mean_sl(np.asarray(reference, dtype=float))
        if ref_sl == 0.0:
            raise ValueError("reference side-lobe level is zero")
        rel = abs(mean_sl - ref_sl) / ref_sl
    return float(mean_sl_db), rel


@dataclass
class MetricsReport:
    """One row of reconstruction-quality numbers for a DAS/tiDAS pair."""

    peak_time: float
    peak_amplitude: float
    fwhm_time: float
    fwhm_axial: float
    local_error: float
    global_error: float
    mean_sl_db: float = float("nan")
    relative_sl_error: float = float("nan")

    COLUMNS = (
        "peak_time",
        "peak_amplitude",
        "fwhm_time",
        "fwhm_axial",
        "local_error",
        "global_error",
        "mean_sl_db",
        "relative_sl_error",
    )

    def row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


def write_reports(path: Union[str, Path], reports: Sequence[MetricsReport]) -> None:
    """Write reports as CSV with the documented column order, header first."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(MetricsReport.COLUMNS)
        for report in reports:
            writer.writerow([f"{v:.9g}" for v in report.row()])
