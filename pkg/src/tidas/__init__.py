"""Delay-and-sum ultrasound beamforming with a time-invariant fast approximation."""

from .geometry import (
    ApertureRule,
    DelayProfile,
    FixedCount,
    FNumber,
    Kossoff,
    ProbeConfig,
    delay_relative_variation,
    element_position,
    element_positions,
    rx_aperture,
    rx_delay_profile,
    tx_aperture,
)
from .simulate import (
    Pulse,
    RfFrame,
    ScattererSet,
    load_frame,
    make_pulse,
    save_frame,
    synthesize_frame,
    tx_arrival_time,
)
from .das import (
    Trace,
    apply_fractional_delay,
    das_line,
    das_psf,
    das_value,
    delay_counter,
    expected_arrival_time,
    reset_delay_counter,
)
from .metrics import (
    MetricsReport,
    envelope,
    fwhm,
    global_error,
    local_error,
    sidelobe_stats,
)
from .tidas import (
    ThetaMatrix,
    TimeWindow,
    estimate_theta,
    fwhm_window,
    theta_matrix_sweep,
    tidas_line,
    tidas_psf,
    window_signals,
)

__version__ = "0.1.0"
