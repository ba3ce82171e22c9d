"""Time-invariant delay-and-sum: one fixed delay profile plus per-point scaling.

The approximation keeps a single receive delay profile for a whole depth
neighborhood. A scalar weight theta, estimated in the frequency domain as the
least-squares match between the fixed-profile sum and the true dynamic-focus
sum over a short correction window, absorbs the residual mismatch. Reusing one
profile turns line reconstruction into a single delayed sum followed by cheap
per-pixel reads, which is where the speedup over classic DAS comes from.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .das import Trace, _delay_samples, delayed_sum
from .geometry import ApertureRule, DelayProfile, ProbeConfig, rx_aperture, rx_delay_profile
from .metrics import envelope, fwhm, window_bounds
from .simulate import RfFrame, ScattererSet, synthesize_frame, tx_arrival_times

__all__ = [
    "TimeWindow",
    "ThetaMatrix",
    "fwhm_window",
    "window_signals",
    "estimate_theta",
    "estimate_theta_aligned",
    "tidas_psf",
    "theta_matrix_sweep",
    "theta_row_aligned",
    "tidas_line",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeWindow:
    """Correction window: center time plus half-width epsilon, both in seconds."""

    center: float
    half_width: float

    def __post_init__(self) -> None:
        if self.half_width <= 0:
            raise ValueError(f"window half-width must be positive, got {self.half_width}")

    def recenter(self, center: float) -> "TimeWindow":
        return replace(self, center=center)


@dataclass
class ThetaMatrix:
    """Scaling weights indexed by (reference delay profile, reconstruction depth).

    Rows follow ``reference_depths`` (the fixed receive focus), columns follow
    ``target_depths``; cells where estimation failed hold NaN.
    """

    reference_depths: np.ndarray
    target_depths: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.reference_depths = np.asarray(self.reference_depths, dtype=float)
        self.target_depths = np.asarray(self.target_depths, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.reference_depths), len(self.target_depths)):
            raise ValueError(
                f"values shape {self.values.shape} does not match the depth grids "
                f"({len(self.reference_depths)} x {len(self.target_depths)})"
            )

    def row(self, reference_depth: float) -> np.ndarray:
        """Theta values for the row whose reference depth is nearest ``reference_depth``."""
        idx = int(np.argmin(np.abs(self.reference_depths - reference_depth)))
        return self.values[idx]

    def interpolate_row(self, reference_depth: float, depths: np.ndarray) -> np.ndarray:
        """Per-pixel thetas for ``depths``, linearly interpolated along the row.

        Failed cells (NaN) render as zero amplitude, with a logged diagnostic.
        """
        row = self.row(reference_depth).copy()
        bad = ~np.isfinite(row)
        if bad.any():
            log.warning("theta row at %.4f m: %d missing cells set to 0", reference_depth, bad.sum())
            row[bad] = 0.0
        return np.interp(np.asarray(depths, dtype=float), self.target_depths, row)

    def save_csv(self, path: Union[str, Path]) -> None:
        save_matrix_csv(path, self.reference_depths, self.target_depths, self.values)

    @classmethod
    def load_csv(cls, path: Union[str, Path]) -> "ThetaMatrix":
        refs, targets, values = load_matrix_csv(path)
        return cls(reference_depths=refs, target_depths=targets, values=values)


def save_matrix_csv(
    path: Union[str, Path],
    row_depths: np.ndarray,
    col_depths: np.ndarray,
    values: np.ndarray,
) -> None:
    """Depth-indexed matrix as CSV: first row target depths, first column row depths."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + [f"{d:.9g}" for d in col_depths])
        for depth, row in zip(row_depths, values):
            writer.writerow([f"{depth:.9g}"] + [f"{v:.9g}" for v in row])


def load_matrix_csv(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"matrix file {path} has no data rows")
    targets = np.array([float(v) for v in rows[0][1:]])
    refs = np.array([float(r[0]) for r in rows[1:]])
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return refs, targets, values


def fwhm_window(
    focal_psf: Trace,
    expected_center: float,
    *,
    min_half_width: Optional[float] = None,
) -> TimeWindow:
    """Correction window sized from the focal PSF: epsilon = FWHM / 2.

    ``min_half_width`` (typically one carrier period) floors epsilon so the
    windowed spectra never degenerate; widths below the sample grid are rejected.
    The returned window is meant to be re-centered per reconstruction depth.
    """
    half = fwhm(focal_psf) / 2.0
    if min_half_width is not None:
        half = max(half, min_half_width)
    if half < 1.0 / focal_psf.sampling_frequency:
        raise ValueError("window half-width is below the sample grid")
    return TimeWindow(center=expected_center, half_width=half)


def window_signals(frame: RfFrame, window: TimeWindow) -> RfFrame:
    """Multiply every trace by the indicator of [center - eps, center + eps]."""
    t_end = frame.t0 + (frame.n_samples - 1) / frame.sampling_frequency
    if window.center - window.half_width < frame.t0 or window.center + window.half_width > t_end:
        raise ValueError("window lies outside the frame support")
    lo, hi = window_bounds(
        frame.n_samples, frame.t0, frame.sampling_frequency, window.center, window.half_width
    )
    if hi <= lo:
        raise ValueError("window covers no sample of the frame")
    masked = np.zeros_like(frame.traces)
    masked[:, lo:hi] = frame.traces[:, lo:hi]
    return RfFrame(
        traces=masked,
        sampling_frequency=frame.sampling_frequency,
        t0=frame.t0,
        tx_focus_depth=frame.tx_focus_depth,
        aperture=frame.aperture,
    )


def _next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 0).bit_length()


def _check_same_aperture(fixed: DelayProfile, true: DelayProfile) -> None:
    if len(fixed) != len(true) or np.any(fixed.element_indices != true.element_indices):
        raise ValueError("fixed and true profiles must cover the same aperture")


def _delay_phases(freqs: np.ndarray, delays: np.ndarray) -> np.ndarray:
    """exp(-2i pi f d) on the uniform rfft grid, one exponential per element.

    Built by cumulative multiplication of the per-bin rotation; drift stays at
    bins * eps, orders of magnitude inside the estimator's tolerance.
    """
    n_el, n_f = len(delays), len(freqs)
    if n_f < 2:
        return np.ones((n_el, n_f), dtype=complex)
    step = np.exp(-2j * np.pi * (freqs[1] - freqs[0]) * delays)
    out = np.empty((n_el, n_f), dtype=complex)
    out[:, 0] = 1.0
    np.multiply.accumulate(
        np.broadcast_to(step[:, None], (n_el, n_f - 1)), axis=1, out=out[:, 1:]
    )
    return out


def _windowed_spectra(
    windowed_frame: RfFrame,
    profile_indices: np.ndarray,
    extra_span: float,
    search: Optional[Tuple[int, int]] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One-sided FFT of the cropped window support, padded for non-circular phases.

    Returns (spectra, freqs, weights, live): spectra holds only the elements with
    in-window content (the others are exactly zero and contribute nothing),
    weights make one-sided sums equal full-grid sums for Hermitian spectra, and
    the Nyquist bin is zeroed: band-pass RF carries nothing there, and dropping
    it makes spectral delay phases commute with real-valued time shifts, so the
    discrete objective has one unambiguous value. ``search`` optionally narrows
    the support scan to a known sample range.
    """
    region = windowed_frame.traces if search is None else windowed_frame.traces[:, search[0]:search[1]]
    base = 0 if search is None else search[0]
    support = np.flatnonzero(np.any(region != 0.0, axis=0))
    if support.size == 0:
        raise ZeroDivisionError("window missed the echo: frame is zero inside the window")
    lo, hi = base + int(support[0]), base + int(support[-1]) + 1
    rows = [windowed_frame.row(i) for i in profile_indices]
    seg = windowed_frame.traces[rows, lo:hi]
    live = np.flatnonzero(np.any(seg != 0.0, axis=1))
    width = hi - lo
    span = int(np.ceil(extra_span * windowed_frame.sampling_frequency)) + 4
    nfft = _next_pow2(max(2 * width, width + span))
    spectra = np.fft.rfft(seg[live], n=nfft, axis=1)
    weights = np.full(spectra.shape[1], 2.0)
    weights[0] = 1.0
    if nfft % 2 == 0:
        spectra[:, -1] = 0.0
        weights[-1] = 1.0
    freqs = np.fft.rfftfreq(nfft, d=1.0 / windowed_frame.sampling_frequency)
    return spectra, freqs, weights, live


def estimate_theta(
    windowed_frame: RfFrame,
    fixed_delays: DelayProfile,
    true_delays: DelayProfile,
    form: str = "beamsum",
    support: Optional[Tuple[int, int]] = None,
) -> float:
    """Least-squares scaling weight matching the fixed-profile sum to the true one.

    beamsum (default) minimizes || theta * a - b ||^2 over the window spectrum,
    with a and b the fixed- and true-delay beam sums; per_element instead keeps
    the element sums inside numerator and denominator. Integrals are discrete
    sums over the FFT grid of the zero-padded windowed traces: the window support
    is cropped, padded to the next power of two at or above twice its width (plus
    the delay span, so phase shifts stay non-circular), and the Nyquist bin is
    dropped. A common offset rebases both delay sets; it multiplies a and b by
    one unimodular factor per bin and cancels from theta.
    """
    _check_same_aperture(fixed_delays, true_delays)
    # delays rebased by a common offset so phase shifts stay inside the padded
    # buffer; a common offset multiplies a and b by one phase and cancels in theta
    offset = min(fixed_delays.delays.min(), true_delays.delays.min())
    d_fixed = fixed_delays.delays - offset
    d_true = true_delays.delays - offset
    spectra, freqs, weights, live = _windowed_spectra(
        windowed_frame,
        fixed_delays.element_indices,
        float(max(d_fixed.max(), d_true.max())),
        search=support,
    )
    phase_fixed = _delay_phases(freqs, d_fixed[live])
    phase_true = _delay_phases(freqs, d_true[live])
    if form == "beamsum":
        a = np.sum(spectra * phase_fixed, axis=0)
        b = np.sum(spectra * phase_true, axis=0)
        denom = float(np.sum(weights * (a.conj() * a).real))
        if denom == 0.0:
            raise ZeroDivisionError("window missed the echo: fixed-profile sum has no energy")
        return float(np.sum(weights * (a.conj() * b).real)) / denom
    if form == "per_element":
        sx = spectra * phase_fixed
        sy = spectra * phase_true
        num = float(np.sum(weights * (sx.conj() * sy + sx * sy.conj()).real))
        denom = float(np.sum(weights * (sx.conj() * sx).real))
        if denom == 0.0:
            raise ZeroDivisionError("window missed the echo: element spectra have no energy")
        return num / denom
    raise ValueError(f"unknown estimator form {form!r}")


def estimate_theta_aligned(
    frame: RfFrame,
    window: TimeWindow,
    fixed_delays: DelayProfile,
    true_delays: DelayProfile,
    method: str = "linear",
) -> float:
    """Scaling weight fitted between the windowed *beam sums* of a full frame.

    The fixed-profile sum (over the fixed profile's own aperture) is matched in
    least squares to the true dynamic sum (over its own aperture) inside the
    correction window. Unlike :func:`estimate_theta`, the window is applied after
    alignment, so every element's echo contributes and the weight also absorbs
    aperture-size and focusing differences; this is the calibration the line
    reconstructor needs.
    """
    a_full = delayed_sum(frame, fixed_delays.element_indices, fixed_delays.delays, method)
    b_full = delayed_sum(frame, true_delays.element_indices, true_delays.delays, method)
    lo, hi = window_bounds(
        frame.n_samples, frame.t0, frame.sampling_frequency, window.center, window.half_width
    )
    if hi <= lo:
        raise ValueError("window lies outside the frame support")
    a = a_full.samples[lo:hi]
    b = b_full.samples[lo:hi]
    denom = float(np.dot(a, a))
    if denom == 0.0:
        raise ZeroDivisionError("window missed the echo: fixed-profile sum has no energy")
    return float(np.dot(a, b)) / denom


def tidas_psf(
    windowed_frame: RfFrame,
    fixed_delays: DelayProfile,
    theta: float,
    method: str = "linear",
    crop: bool = False,
    support: Optional[Tuple[int, int]] = None,
) -> Trace:
    """theta times the fixed-profile delayed sum; the full time axis is kept.

    ``crop`` restricts the per-element work to the window support plus the delay
    span (the windowed traces are zero elsewhere); results match the full-length
    path to float rounding. ``support`` optionally passes the known nonzero
    sample range [lo, hi) instead of scanning for it.
    """
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    fs = windowed_frame.sampling_frequency
    n = windowed_frame.n_samples
    if crop and method == "linear":
        if support is None:
            nonzero = np.flatnonzero(np.any(windowed_frame.traces != 0.0, axis=0))
            if nonzero.size == 0:
                return Trace(np.zeros(n), fs, windowed_frame.t0)
            support = (int(nonzero[0]), int(nonzero[-1]) + 1)
        span = int(np.ceil(-fixed_delays.delays.min() * fs)) + 2
        lo = max(support[0] - span, 0)
        hi = min(support[1] + 2, n)
        half = windowed_frame.traces.shape[0] // 2
        total = np.zeros(hi - lo)
        for idx, d in zip(fixed_delays.element_indices, fixed_delays.delays):
            total += _delay_samples(windowed_frame.traces[int(idx) + half, lo:hi], fs, d, method)
        out = np.zeros(n)
        out[lo:hi] = total
        return Trace(theta * out, fs, windowed_frame.t0)
    summed = delayed_sum(windowed_frame, fixed_delays.element_indices, fixed_delays.delays, method)
    return Trace(theta * summed.samples, fs, windowed_frame.t0)


def _theta_column(
    target_depth: float,
    reference_depths: np.ndarray,
    config: ProbeConfig,
    tx_rule: ApertureRule,
    rx_rule: ApertureRule,
    tx_focus_depth: float,
    window_half_width: float,
    form: str,
    spreading: bool,
) -> np.ndarray:
    """Theta values of one target depth against every reference profile."""
    frame = synthesize_frame(
        ScattererSet.on_axis([target_depth]), tx_focus_depth, config, tx_rule, spreading=spreading
    )
    arrival = float(
        tx_arrival_times(np.array([target_depth]), tx_focus_depth, frame.aperture, config)[0]
    ) + target_depth / config.sound_speed
    window = TimeWindow(center=arrival, half_width=window_half_width)
    aperture = rx_aperture(target_depth, rx_rule, config)
    true = rx_delay_profile(target_depth, aperture, config)
    out = np.empty(len(reference_depths))
    try:
        windowed = window_signals(frame, window)
    except ValueError as exc:
        log.warning("target %.4f m: %s", target_depth, exc)
        out.fill(np.nan)
        return out
    for i, ref in enumerate(reference_depths):
        try:
            fixed = rx_delay_profile(ref, aperture, config)
            out[i] = estimate_theta(windowed, fixed, true, form=form)
        except (ValueError, ZeroDivisionError) as exc:
            log.warning("cell (ref %.4f, target %.4f): %s", ref, target_depth, exc)
            out[i] = np.nan
    return out


def theta_matrix_sweep(
    depth_grid: np.ndarray,
    config: ProbeConfig,
    tx_rule: ApertureRule,
    rx_rule: ApertureRule,
    *,
    tx_focus_depth: float,
    window_half_width: float,
    reference_depths: Optional[np.ndarray] = None,
    form: str = "beamsum",
    spreading: bool = True,
    workers: int = 1,
) -> ThetaMatrix:
    """Theta for every (reference profile, single-scatterer depth) pair.

    One single-scatterer frame is simulated per column; estimation failures are
    recorded as NaN instead of aborting the sweep. Deterministic for a given
    configuration, independent of the worker count.
    """
    targets = np.asarray(depth_grid, dtype=float)
    refs = targets if reference_depths is None else np.asarray(reference_depths, dtype=float)
    args = [
        (z, refs, config, tx_rule, rx_rule, tx_focus_depth, window_half_width, form, spreading)
        for z in targets
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(_theta_column_star, args, chunksize=4))
    else:
        columns = [_theta_column_star(a) for a in args]
    values = np.stack(columns, axis=1)
    return ThetaMatrix(reference_depths=refs, target_depths=targets, values=values)


def _theta_column_star(args) -> np.ndarray:
    return _theta_column(*args)


def _aligned_cell(
    target_depth: float,
    reference_depth: float,
    config: ProbeConfig,
    tx_rule: ApertureRule,
    rx_rule: ApertureRule,
    tx_focus_depth: float,
    window_half_width: float,
    spreading: bool,
    method: str,
) -> float:
    frame = synthesize_frame(
        ScattererSet.on_axis([target_depth]), tx_focus_depth, config, tx_rule, spreading=spreading
    )
    arrival = float(
        tx_arrival_times(np.array([target_depth]), tx_focus_depth, frame.aperture, config)[0]
    ) + target_depth / config.sound_speed
    fixed = rx_delay_profile(reference_depth, rx_aperture(reference_depth, rx_rule, config), config)
    true = rx_delay_profile(target_depth, rx_aperture(target_depth, rx_rule, config), config)
    try:
        return estimate_theta_aligned(
            frame, TimeWindow(arrival, window_half_width), fixed, true, method
        )
    except (ValueError, ZeroDivisionError) as exc:
        log.warning("aligned cell (ref %.4f, target %.4f): %s", reference_depth, target_depth, exc)
        return float("nan")


def _aligned_cell_star(args) -> float:
    return _aligned_cell(*args)


def theta_row_aligned(
    reference_depth: float,
    depth_grid: np.ndarray,
    config: ProbeConfig,
    tx_rule: ApertureRule,
    rx_rule: ApertureRule,
    *,
    window_half_width: float,
    tx_focus_depth: Optional[float] = None,
    spreading: bool = True,
    method: str = "linear",
    workers: int = 1,
) -> np.ndarray:
    """Aligned-window thetas of one reference profile over ``depth_grid``.

    This is the row the line reconstructor consumes; the transmit focus defaults
    to the reference depth (the fixed profile is the transmit-focus profile).
    """
    focus = reference_depth if tx_focus_depth is None else tx_focus_depth
    args = [
        (z, reference_depth, config, tx_rule, rx_rule, focus, window_half_width, spreading, method)
        for z in np.asarray(depth_grid, dtype=float)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(_aligned_cell_star, args, chunksize=8)))
    return np.array([_aligned_cell_star(a) for a in args])


def tidas_line(
    frame: RfFrame,
    fixed_delays: DelayProfile,
    thetas: Sequence[float],
    depths: np.ndarray,
    config: ProbeConfig,
    *,
    window_half_width: float,
    method: str = "linear",
) -> np.ndarray:
    """Line reconstruction with one fixed profile: a single pass over elements.

    The delayed sum is built once (fractional-delay count equals the aperture
    size, independent of the pixel count); each pixel then reads the envelope of
    the summed trace inside its correction window and scales it by its theta.
    """
    depths = np.asarray(depths, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if len(thetas) != len(depths):
        raise ValueError("one theta per reconstruction depth is required")
    fs = frame.sampling_frequency
    summed = delayed_sum(frame, fixed_delays.element_indices, fixed_delays.delays, method).samples

    arrivals = (
        tx_arrival_times(depths, frame.tx_focus_depth, frame.aperture, config)
        + depths / config.sound_speed
    )
    out = np.empty(len(depths))
    grid = np.arange(frame.n_samples)
    for k, (t_star, theta) in enumerate(zip(arrivals, thetas)):
        lo, hi = window_bounds(frame.n_samples, frame.t0, fs, t_star, window_half_width)
        if hi - lo < 4:
            log.warning("pixel at %.4f m: correction window off the trace support", depths[k])
            out[k] = 0.0
            continue
        env = envelope(Trace(summed[lo:hi], fs, 0.0)).samples
        pos = (t_star - frame.t0) * fs - lo
        out[k] = theta * float(np.interp(pos, grid[: hi - lo], env, left=0.0, right=0.0))
    return out
