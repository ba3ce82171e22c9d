"""Synthetic per-element RF data for point scatterers under a focused, unsteered transmit.

Each scatterer contributes a delayed, weighted replica of the transmit pulse to
every receiving element; contributions add linearly (single-scattering model).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import ApertureRule, ProbeConfig, element_positions, tx_aperture

__all__ = [
    "Pulse",
    "ScattererSet",
    "RfFrame",
    "make_pulse",
    "tx_arrival_time",
    "tx_arrival_times",
    "synthesize_frame",
    "save_frame",
    "load_frame",
]

DEFAULT_MAX_DEPTH = 0.06


@dataclass(frozen=True)
class Pulse:
    """Gaussian-modulated sinusoid used as the transmit waveform.

    ``samples`` hold the waveform on the sampling grid with the envelope peak at
    duration/2; :meth:`evaluate` gives the same waveform centered at t = 0 so a
    deposit at time tau peaks exactly at tau.
    """

    center_frequency: float
    fractional_bandwidth: float
    duration: float
    samples: np.ndarray
    sampling_frequency: float

    @property
    def sigma(self) -> float:
        """Envelope standard deviation matching the -6 dB bandwidth."""
        return np.sqrt(2.0 * np.log(2.0)) / (
            np.pi * self.fractional_bandwidth * self.center_frequency
        )

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        """Waveform value at times ``t`` relative to the envelope peak."""
        t = np.asarray(t, dtype=float)
        sigma = self.sigma
        out = np.exp(-(t * t) / (2.0 * sigma * sigma)) * np.sin(
            2.0 * np.pi * self.center_frequency * t
        )
        return np.where(np.abs(t) <= 4.0 * sigma, out, 0.0)


@dataclass(frozen=True)
class ScattererSet:
    """Point scatterers (x, z, reflectivity amplitude); all depths positive."""

    xs: np.ndarray
    zs: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.xs) == len(self.zs) == len(self.amplitudes)):
            raise ValueError("coordinate and amplitude arrays must share one length")
        if len(self.zs) == 0:
            raise ValueError("scatterer set must not be empty")
        if np.any(np.asarray(self.zs) <= 0):
            raise ValueError("all scatterer depths must be positive")
        if not np.all(np.isfinite(self.amplitudes)):
            raise ValueError("scatterer amplitudes must be finite")

    @classmethod
    def from_points(cls, points: Sequence[Tuple[float, float, float]]) -> "ScattererSet":
        arr = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(xs=arr[:, 0], zs=arr[:, 1], amplitudes=arr[:, 2])

    @classmethod
    def on_axis(cls, depths: Sequence[float], amplitudes=None) -> "ScattererSet":
        depths = np.asarray(depths, dtype=float)
        if amplitudes is None:
            amplitudes = np.ones_like(depths)
        return cls(xs=np.zeros_like(depths), zs=depths, amplitudes=np.asarray(amplitudes, float))

    def __len__(self) -> int:
        return len(self.zs)


@dataclass
class RfFrame:
    """Per-element received time signals plus the acquisition metadata.

    ``traces`` is [element, time-sample] for the whole array; ``t0`` is the time
    of the first sample measured from transmit firing.
    """

    traces: np.ndarray
    sampling_frequency: float
    t0: float
    tx_focus_depth: float
    aperture: np.ndarray

    def __post_init__(self) -> None:
        if self.traces.ndim != 2:
            raise ValueError("traces must be a 2-D [element, sample] array")
        if self.t0 < 0:
            raise ValueError(f"t0 must be non-negative, got {self.t0}")

    @property
    def n_samples(self) -> int:
        return self.traces.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.sampling_frequency

    def row(self, element_index: int) -> int:
        """Trace row holding ``element_index`` (indices are symmetric about 0)."""
        return int(element_index) + self.traces.shape[0] // 2


def make_pulse(config: ProbeConfig) -> Pulse:
    """Build the transmit pulse for ``config``.

    The envelope is Gaussian with sigma chosen so the -6 dB envelope bandwidth
    equals fractional_bandwidth * center_frequency; support is truncated at
    +/- 4 sigma.
    """
    sigma = np.sqrt(2.0 * np.log(2.0)) / (
        np.pi * config.fractional_bandwidth * config.center_frequency
    )
    duration = 8.0 * sigma
    n = int(np.ceil(duration * config.sampling_frequency)) + 1
    grid = np.arange(n) / config.sampling_frequency
    pulse = Pulse(
        center_frequency=config.center_frequency,
        fractional_bandwidth=config.fractional_bandwidth,
        duration=duration,
        samples=np.empty(0),
        sampling_frequency=config.sampling_frequency,
    )
    object.__setattr__(pulse, "samples", pulse.evaluate(grid - duration / 2.0))
    return pulse


def tx_arrival_time(
    point: Tuple[float, float],
    tx_focus_depth: float,
    aperture: np.ndarray,
    config: ProbeConfig,
) -> float:
    """Arrival time of the focused transmit wavefront at ``point``.

    Element firing times are referenced so every wavefront reaches the focus at
    exactly tx_focus_depth / sound_speed; at a general point the arrival is the
    latest element wavefront.
    """
    x, z = point
    if z <= 0:
        raise ValueError(f"point depth must be positive, got {z}")
    xs = element_positions(np.asarray(aperture), config)
    c = config.sound_speed
    focal_delay = (np.hypot(xs, tx_focus_depth) - tx_focus_depth) / c
    travel = np.hypot(x - xs, z) / c
    return float(np.max(travel - focal_delay))


def tx_arrival_times(
    depths: np.ndarray,
    tx_focus_depth: float,
    aperture: np.ndarray,
    config: ProbeConfig,
) -> np.ndarray:
    """Vectorized :func:`tx_arrival_time` for on-axis points at ``depths``."""
    depths = np.asarray(depths, dtype=float)
    xs = element_positions(np.asarray(aperture), config)
    c = config.sound_speed
    focal_delay = (np.hypot(xs, tx_focus_depth) - tx_focus_depth) / c
    travel = np.hypot(xs[None, :], depths[:, None]) / c
    return np.max(travel - focal_delay[None, :], axis=1)


def synthesize_frame(
    scatterers: ScattererSet,
    tx_focus_depth: float,
    config: ProbeConfig,
    tx_rule: ApertureRule,
    *,
    pulse: Optional[Pulse] = None,
    spreading: bool = True,
    max_depth: float = DEFAULT_MAX_DEPTH,
    noise_amplitude: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> RfFrame:
    """Simulate one RF frame for ``scatterers``.

    Every element receives, for each scatterer, the pulse delayed by the transmit
    arrival plus the return path and weighted by the scatterer amplitude times an
    optional obliquity-like spreading factor z / return_distance. The trace length
    covers the deepest echo plus one pulse duration.
    """
    if np.any(scatterers.zs > max_depth):
        raise ValueError(f"scatterer deeper than the configured max depth {max_depth} m")
    if pulse is None:
        pulse = make_pulse(config)

    aperture = tx_aperture(tx_focus_depth, tx_rule, config)
    fs = config.sampling_frequency
    c = config.sound_speed
    n_el = config.element_count
    xs = element_positions(np.arange(-n_el // 2, n_el // 2), config)

    arrivals = np.array(
        [
            tx_arrival_time((x, z), tx_focus_depth, aperture, config)
            for x, z in zip(scatterers.xs, scatterers.zs)
        ]
    )
    dist = np.hypot(scatterers.xs[:, None] - xs[None, :], scatterers.zs[:, None])
    tau = arrivals[:, None] + dist / c  # [scatterer, element]

    n_samples = int(np.ceil((tau.max() + pulse.duration) * fs)) + 1
    traces = np.zeros((n_el, n_samples))
    half = pulse.duration / 2.0
    weights = scatterers.zs[:, None] / dist if spreading else np.ones_like(dist)
    weights = weights * scatterers.amplitudes[:, None]

    for s in range(len(scatterers)):
        k0 = np.floor((tau[s] - half) * fs).astype(int)
        k1 = np.ceil((tau[s] + half) * fs).astype(int)
        for e in range(n_el):
            a, b = max(k0[e], 0), min(k1[e] + 1, n_samples)
            if a >= b:
                continue
            t = np.arange(a, b) / fs - tau[s, e]
            traces[e, a:b] += weights[s, e] * pulse.evaluate(t)

    if noise_amplitude > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        traces += noise_amplitude * rng.standard_normal(traces.shape)

    return RfFrame(
        traces=traces,
        sampling_frequency=fs,
        t0=0.0,
        tx_focus_depth=tx_focus_depth,
        aperture=aperture,
    )


def save_frame(frame: RfFrame, path_base: Union[str, Path]) -> Tuple[Path, Path]:
    """Persist ``frame`` as <base>.json (header) plus <base>.f32 (little-endian f32 blob)."""
    base = Path(path_base)
    header = {
        "sampling_frequency": frame.sampling_frequency,
        "t0": frame.t0,
        "tx_focus_depth": frame.tx_focus_depth,
        "aperture": [int(frame.aperture.min()), int(frame.aperture.max())],
        "element_count": int(frame.traces.shape[0]),
        "sample_count": int(frame.traces.shape[1]),
        "dtype": "float32-le",
        "layout": "row-major [element][sample]",
    }
    json_path = base.parent / (base.name + ".json")
    blob_path = base.parent / (base.name + ".f32")
    json_path.write_text(json.dumps(header, indent=2) + "\n")
    blob = frame.traces.astype("<f4").tobytes(order="C")
    blob_path.write_bytes(blob)
    return json_path, blob_path


def load_frame(path_base: Union[str, Path]) -> RfFrame:
    """Read a frame written by :func:`save_frame`."""
    base = Path(path_base)
    header = json.loads((base.parent / (base.name + ".json")).read_text())
    raw = (base.parent / (base.name + ".f32")).read_bytes()
    n_el, n_s = header["element_count"], header["sample_count"]
    expected = n_el * n_s * struct.calcsize("f")
    if len(raw) != expected:
        raise ValueError(f"blob size {len(raw)} does not match header ({expected} bytes)")
    traces = np.frombuffer(raw, dtype="<f4").reshape(n_el, n_s).astype(float)
    lo, hi = header["aperture"]
    return RfFrame(
        traces=traces,
        sampling_frequency=header["sampling_frequency"],
        t0=header["t0"],
        tx_focus_depth=header["tx_focus_depth"],
        aperture=np.arange(lo, hi + 1),
    )
