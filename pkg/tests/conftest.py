import numpy as np
import pytest

from tidas import (
    FNumber,
    Kossoff,
    ProbeConfig,
    ScattererSet,
    das_psf,
    expected_arrival_time,
    fwhm_window,
    synthesize_frame,
)


@pytest.fixture(scope="session")
def probe():
    return ProbeConfig()


@pytest.fixture(scope="session")
def rx_rule():
    return FNumber(1.0)


@pytest.fixture(scope="session")
def tx_rule():
    return Kossoff(0.6)


@pytest.fixture(scope="session")
def focal_frame(probe, tx_rule):
    """Single scatterer at the 25 mm transmit focus."""
    return synthesize_frame(ScattererSet.on_axis([25e-3]), 25e-3, probe, tx_rule)


@pytest.fixture(scope="session")
def focal_psf(focal_frame, probe, rx_rule):
    return das_psf(focal_frame, (0.0, 25e-3), probe, rx_rule)


@pytest.fixture(scope="session")
def focal_window(focal_psf, focal_frame, probe):
    center = expected_arrival_time((0.0, 25e-3), focal_frame, probe)
    return fwhm_window(focal_psf, center)


def single_scatterer_frame(probe, tx_rule, depth, tx_focus=25e-3):
    return synthesize_frame(ScattererSet.on_axis([depth]), tx_focus, probe, tx_rule)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
