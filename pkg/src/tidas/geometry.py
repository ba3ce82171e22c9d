"""Linear-array geometry, aperture selection rules, and the receive delay law."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "ProbeConfig",
    "FNumber",
    "FixedCount",
    "Kossoff",
    "ApertureRule",
    "DelayProfile",
    "element_position",
    "element_positions",
    "symmetric_aperture",
    "rx_delay_profile",
    "delay_relative_variation",
    "rx_aperture",
    "tx_aperture",
]


@dataclass(frozen=True)
class ProbeConfig:
    """Geometry, acoustics, and sampling parameters of the simulated linear array.

    Element indices run over [-element_count/2, element_count/2), symmetric about
    the array center; all quantities are SI (m, Hz, s).
    """

    element_count: int = 192
    pitch: float = 0.2e-3
    center_frequency: float = 7.0e6
    sampling_frequency: float = 50.0e6
    sound_speed: float = 1540.0
    pulse_cycles: float = 3.0
    fractional_bandwidth: float = 0.75

    def __post_init__(self) -> None:
        if self.element_count < 2 or self.element_count % 2 != 0:
            raise ValueError(f"element_count must be even and >= 2, got {self.element_count}")
        if self.pitch <= 0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.sound_speed <= 0:
            raise ValueError(f"sound_speed must be positive, got {self.sound_speed}")
        if self.sampling_frequency < 4.0 * self.center_frequency:
            raise ValueError(
                "sampling_frequency must be at least 4x the center frequency "
                f"({self.sampling_frequency} < 4 * {self.center_frequency})"
            )

    @property
    def wavelength(self) -> float:
        return self.sound_speed / self.center_frequency

    @property
    def sample_period(self) -> float:
        return 1.0 / self.sampling_frequency

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ProbeConfig":
        raw = json.loads(Path(path).read_text())
        return cls(**raw)


@dataclass(frozen=True)
class FNumber:
    """Aperture rule: width = depth / f."""

    f: float

    def __post_init__(self) -> None:
        if self.f <= 0:
            raise ValueError(f"focal number must be positive, got {self.f}")


@dataclass(frozen=True)
class FixedCount:
    """Aperture rule: a fixed number of central elements, independent of depth."""

    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"element count must be >= 1, got {self.n}")


@dataclass(frozen=True)
class Kossoff:
    """Aperture rule: width = sqrt(4 * wavelength * depth / k).

    The focus then sits at fraction k of the near-field transition distance
    A^2 / (4 * wavelength) of the resulting aperture.
    """

    k: float

    def __post_init__(self) -> None:
        if not 0 < self.k <= 1:
            raise ValueError(f"parameter must satisfy 0 < k <= 1, got {self.k}")


ApertureRule = Union[FNumber, FixedCount, Kossoff]


@dataclass(frozen=True)
class DelayProfile:
    """Per-element receive delays focusing at one depth.

    Delays follow (z - sqrt(x_n^2 + z^2)) / c, so they are never positive and
    mirror-symmetric in the element position.
    """

    focus_depth: float
    element_indices: np.ndarray
    delays: np.ndarray

    def __post_init__(self) -> None:
        if len(self.element_indices) != len(self.delays):
            raise ValueError("element_indices and delays must have equal length")
        if len(self.delays) == 0:
            raise ValueError("delay profile must cover at least one element")

    def __len__(self) -> int:
        return len(self.delays)


def element_position(n: int, config: ProbeConfig) -> float:
    """Lateral center coordinate of element ``n``; no element sits exactly at x = 0."""
    half = config.element_count // 2
    if not -half <= n < half:
        raise ValueError(f"element index {n} outside [-{half}, {half})")
    return (n + 0.5) * config.pitch


def element_positions(indices: np.ndarray, config: ProbeConfig) -> np.ndarray:
    """Vectorized :func:`element_position`."""
    indices = np.asarray(indices)
    half = config.element_count // 2
    if indices.size and (indices.min() < -half or indices.max() >= half):
        raise ValueError("element index outside the array")
    return (indices + 0.5) * config.pitch


def symmetric_aperture(count: int, config: ProbeConfig) -> np.ndarray:
    """Indices of the central ``count`` elements (count forced even, clamped)."""
    count = int(count)
    if count % 2 != 0:
        count += 1  # symmetric ranges about the center need an even count
    count = max(2, min(count, config.element_count))
    half = count // 2
    return np.arange(-half, half)


def _width_to_aperture(width: float, config: ProbeConfig) -> np.ndarray:
    # largest symmetric range whose extent (count * pitch) stays within width
    count = 2 * int(np.floor(width / (2.0 * config.pitch) + 1e-9))
    return symmetric_aperture(count, config)


def rx_delay_profile(focus_depth: float, aperture: np.ndarray, config: ProbeConfig) -> DelayProfile:
    """Receive delays (z - sqrt(x_n^2 + z^2)) / c over ``aperture``."""
    if focus_depth <= 0:
        raise ValueError(f"focus depth must be positive, got {focus_depth}")
    aperture = np.asarray(aperture)
    x = element_positions(aperture, config)
    z = focus_depth
    delays = (z - np.hypot(x, z)) / config.sound_speed
    return DelayProfile(focus_depth=z, element_indices=aperture, delays=delays)


def delay_relative_variation(n: int, z0: float, z: float, config: ProbeConfig) -> float:
    """First-order relative change of the receive delay when moving the focus z0 -> z."""
    if z0 <= 0:
        raise ValueError(f"reference depth must be positive, got {z0}")
    x = element_position(n, config)
    return -(z - z0) / np.hypot(x, z0)


def rx_aperture(depth: float, rule: ApertureRule, config: ProbeConfig) -> np.ndarray:
    """Receive aperture at ``depth`` under ``rule``; never fewer than 2 elements."""
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    if isinstance(rule, FNumber):
        return _width_to_aperture(depth / rule.f, config)
    if isinstance(rule, FixedCount):
        return symmetric_aperture(rule.n, config)
    if isinstance(rule, Kossoff):
        width = np.sqrt(4.0 * config.wavelength * depth / rule.k)
        return _width_to_aperture(width, config)
    raise TypeError(f"unknown aperture rule: {rule!r}")


def tx_aperture(focal_depth: float, rule: ApertureRule, config: ProbeConfig) -> np.ndarray:
    """Transmit aperture for a focus at ``focal_depth``; same conversion as receive."""
    return rx_aperture(focal_depth, rule, config)
