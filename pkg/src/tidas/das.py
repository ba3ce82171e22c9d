"""Reference dynamic-focus delay-and-sum beamformer.

Every reconstruction point gets its own delay profile and receive aperture; the
per-element fractional-delay work therefore scales with elements x pixels, which
is exactly the cost the time-invariant approximation removes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .geometry import ApertureRule, ProbeConfig, element_positions, rx_aperture
from .simulate import RfFrame, tx_arrival_time

__all__ = [
    "Trace",
    "apply_fractional_delay",
    "delayed_sum",
    "das_psf",
    "das_value",
    "das_line",
    "expected_arrival_time",
    "target_delays",
    "reset_delay_counter",
    "delay_counter",
]

# counts apply_fractional_delay invocations; instrumentation for the
# single-pass contract of the time-invariant line reconstructor
_delay_ops = 0


def reset_delay_counter() -> None:
    global _delay_ops
    _delay_ops = 0


def delay_counter() -> int:
    return _delay_ops


@dataclass
class Trace:
    """One time signal: samples on a uniform grid starting at ``t0``."""

    samples: np.ndarray
    sampling_frequency: float
    t0: float = 0.0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise ValueError("trace needs a 1-D, non-empty sample array")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sampling_frequency

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.sampling_frequency

    def __len__(self) -> int:
        return len(self.samples)


def _integer_shift(x: np.ndarray, k: int) -> np.ndarray:
    """out[i] = x[i - k] with zeros shifted in at the edges."""
    n = len(x)
    out = np.zeros(n, dtype=float)
    if k >= n or -k >= n:
        return out
    if k >= 0:
        out[k:] = x[: n - k]
    else:
        out[: n + k] = x[-k:]
    return out


def _delay_samples(x: np.ndarray, fs: float, delay: float, method: str) -> np.ndarray:
    """Sample-level core of :func:`apply_fractional_delay`."""
    global _delay_ops
    _delay_ops += 1
    n = len(x)
    if abs(delay) * fs >= n:
        raise ValueError(f"delay {delay} s exceeds the trace support {n / fs} s")
    shift = delay * fs
    nearest = round(shift)
    if abs(shift - nearest) < 1e-9:  # integer shifts need no interpolation
        if method == "spectral":
            return np.roll(x, nearest).astype(float)
        return _integer_shift(x, nearest)
    if method == "linear":
        m = int(np.floor(shift))
        mu = shift - m
        out = np.zeros(n, dtype=float)
        # out[k] = (1-mu) x[k-m] + mu x[k-m-1]; both taps valid for k in [m+1, m+n)
        c0, c1 = max(m + 1, 0), min(m + n, n)
        if c1 > c0:
            out[c0:c1] = (1.0 - mu) * x[c0 - m : c1 - m] + mu * x[c0 - m - 1 : c1 - m - 1]
        if 0 <= m < n:  # lower edge: only the x[0] tap exists
            out[m] = (1.0 - mu) * x[0]
        if 0 <= m + n < n:  # upper edge: only the x[n-1] tap exists
            out[m + n] = mu * x[n - 1]
        return out
    if method == "spectral":
        spec = np.fft.fft(x)
        freqs = np.fft.fftfreq(n, d=1.0 / fs)
        return np.real(np.fft.ifft(spec * np.exp(-2j * np.pi * freqs * delay)))
    raise ValueError(f"unknown delay method {method!r}")


def apply_fractional_delay(trace: Trace, delay: float, method: str = "linear") -> Trace:
    """Shift ``trace`` by +delay in time: out(t) = in(t - delay).

    linear: two-tap interpolation, zeros shifted in at the edges.
    spectral: phase ramp on the DFT; exact for band-limited content but circular,
    so the caller is responsible for sufficient zero padding.
    """
    out = _delay_samples(trace.samples, trace.sampling_frequency, delay, method)
    return Trace(out, trace.sampling_frequency, trace.t0)


def target_delays(
    target: Tuple[float, float], aperture: np.ndarray, config: ProbeConfig
) -> np.ndarray:
    """Receive delays aligning echoes from ``target`` across ``aperture``."""
    x, z = target
    xs = element_positions(np.asarray(aperture), config)
    return (z - np.hypot(x - xs, z)) / config.sound_speed


def expected_arrival_time(target: Tuple[float, float], frame: RfFrame, config: ProbeConfig) -> float:
    """Aligned echo time of ``target`` under the frame's transmit focus."""
    return tx_arrival_time(target, frame.tx_focus_depth, frame.aperture, config) + target[1] / config.sound_speed


def delayed_sum(
    frame: RfFrame, element_indices: np.ndarray, delays: np.ndarray, method: str = "linear"
) -> Trace:
    """Sum of the frame's traces, each shifted by its per-element delay."""
    fs = frame.sampling_frequency
    half = frame.traces.shape[0] // 2
    total = np.zeros(frame.n_samples)
    for idx, d in zip(element_indices, delays):
        total += _delay_samples(frame.traces[int(idx) + half], fs, d, method)
    return Trace(total, fs, frame.t0)


def das_psf(
    frame: RfFrame,
    target: Tuple[float, float],
    config: ProbeConfig,
    rx_rule: ApertureRule,
    method: str = "linear",
) -> Trace:
    """Coherent delayed sum over the dynamic receive aperture of ``target``."""
    aperture = rx_aperture(target[1], rx_rule, config)
    delays = target_delays(target, aperture, config)
    return delayed_sum(frame, aperture, delays, method)


def _envelope_value_at(trace: Trace, t: float, half_width: Optional[float]) -> float:
    """Envelope of ``trace`` sampled at time ``t``, optionally on a cropped window."""
    from .metrics import envelope, window_bounds  # runtime import: metrics depends on Trace

    fs = trace.sampling_frequency
    pos = (t - trace.t0) * fs
    if half_width is None:
        env = envelope(trace).samples
        return float(np.interp(pos, np.arange(len(env)), env, left=0.0, right=0.0))
    lo, hi = window_bounds(len(trace.samples), trace.t0, fs, t, half_width)
    if hi - lo < 4:
        return 0.0
    env = envelope(Trace(trace.samples[lo:hi], fs, 0.0)).samples
    return float(np.interp(pos - lo, np.arange(len(env)), env, left=0.0, right=0.0))


def das_value(
    frame: RfFrame,
    target: Tuple[float, float],
    config: ProbeConfig,
    rx_rule: ApertureRule,
    *,
    envelope_half_width: Optional[float] = None,
    method: str = "linear",
) -> float:
    """Scalar pixel value: PSF envelope at the expected arrival time of ``target``."""
    psf = das_psf(frame, target, config, rx_rule, method)
    t_star = expected_arrival_time(target, frame, config)
    return _envelope_value_at(psf, t_star, envelope_half_width)


def das_line(
    frame: RfFrame,
    depths: np.ndarray,
    config: ProbeConfig,
    rx_rule: ApertureRule,
    *,
    envelope_half_width: Optional[float] = None,
    method: str = "linear",
) -> np.ndarray:
    """Dynamic-focus reconstruction of the central line, one profile per depth."""
    depths = np.asarray(depths, dtype=float)
    if np.any(np.diff(depths) <= 0) or np.any(depths <= 0):
        raise ValueError("depths must be strictly increasing and positive")
    return np.array(
        [
            das_value(
                frame,
                (0.0, z),
                config,
                rx_rule,
                envelope_half_width=envelope_half_width,
                method=method,
            )
            for z in depths
        ]
    )
