import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from tidas import (
    ScattererSet,
    Trace,
    das_line,
    das_psf,
    delay_counter,
    estimate_theta,
    expected_arrival_time,
    fwhm_window,
    reset_delay_counter,
    synthesize_frame,
    theta_matrix_sweep,
    tidas_line,
    tidas_psf,
    window_signals,
)
from tidas.geometry import DelayProfile, rx_aperture, rx_delay_profile
from tidas.simulate import RfFrame
from tidas.tidas import (
    ThetaMatrix,
    TimeWindow,
    estimate_theta_aligned,
    theta_row_aligned,
)


FS = 50e6


def random_windowed_frame(rng, n_el=8, n=128):
    """Small frame whose traces are band-passed bursts on a common support."""
    traces = np.zeros((n_el, n))
    s0 = int(rng.integers(8, n // 2))
    s1 = s0 + int(rng.integers(10, n - s0 - 4))
    t = np.arange(s1 - s0) / FS
    burst = rng.standard_normal((n_el, s1 - s0))
    burst *= np.sin(2 * np.pi * 7e6 * t + rng.uniform(0, 2 * np.pi, (n_el, 1)))
    traces[:, s0:s1] = burst
    idx = np.arange(-(n_el // 2), n_el - n_el // 2)
    return RfFrame(traces, FS, 0.0, 0.02, idx), idx, (s0, s1)


def random_profiles(rng, idx, max_shift=5.0):
    d_fixed = -rng.uniform(0, max_shift, len(idx)) / FS
    d_true = -rng.uniform(0, max_shift, len(idx)) / FS
    return DelayProfile(0.01, idx, d_fixed), DelayProfile(0.01, idx, d_true)


class TestTimeWindow:
    def test_positive_half_width_required(self):
        with pytest.raises(ValueError):
            TimeWindow(1e-6, 0.0)

    def test_recenter_keeps_width(self):
        w = TimeWindow(1e-6, 2e-7).recenter(9e-6)
        assert w.center == 9e-6 and w.half_width == 2e-7


class TestFwhmWindow:
    def test_gaussian_envelope_half_width(self):
        sigma = 30.0
        k = np.arange(512)
        x = np.exp(-((k - 256) ** 2) / (2 * sigma**2)) * np.sin(2 * np.pi * 0.14 * k)
        window = fwhm_window(Trace(x, FS), expected_center=5e-6)
        assert window.half_width == pytest.approx(np.sqrt(2 * np.log(2)) * sigma / FS, rel=0.02)
        assert window.center == 5e-6

    def test_rectangular_envelope_half_width(self):
        x = np.zeros(400)
        k = np.arange(120)
        x[140:260] = np.sin(2 * np.pi * 0.23 * k)
        window = fwhm_window(Trace(x, FS), 0.0)
        assert window.half_width == pytest.approx(60 / FS, rel=0.08)

    def test_minimum_half_width_floor(self):
        sigma = 10.0
        k = np.arange(256)
        x = np.exp(-((k - 128) ** 2) / (2 * sigma**2)) * np.sin(2 * np.pi * 0.2 * k)
        floor = 2e-6
        window = fwhm_window(Trace(x, FS), 0.0, min_half_width=floor)
        assert window.half_width == floor

    def test_degenerate_trace_rejected(self):
        with pytest.raises(ValueError):
            fwhm_window(Trace(np.ones(64), FS), 0.0)


class TestWindowSignals:
    def test_full_window_is_identity(self, focal_frame):
        n = focal_frame.n_samples
        center = focal_frame.t0 + (n / 2) / FS
        window = TimeWindow(center, (n / 2 - 2) / FS)
        out = window_signals(focal_frame, window)
        assert np.array_equal(out.traces, focal_frame.traces)

    def test_energy_outside_window_is_exactly_zero(self, focal_frame, focal_window, probe):
        t_star = expected_arrival_time((0.0, 25e-3), focal_frame, probe)
        out = window_signals(focal_frame, focal_window.recenter(t_star))
        times = out.times
        outside = (times < t_star - focal_window.half_width) | (
            times > t_star + focal_window.half_width
        )
        assert not out.traces[:, outside].any()
        assert out.traces.any()

    def test_window_outside_support_rejected(self, focal_frame):
        with pytest.raises(ValueError):
            window_signals(focal_frame, TimeWindow(-1e-6, 1e-7))
        end = focal_frame.times[-1]
        with pytest.raises(ValueError):
            window_signals(focal_frame, TimeWindow(end, 1e-6))

    def test_does_not_mutate_input(self, focal_frame, focal_window, probe):
        t_star = expected_arrival_time((0.0, 25e-3), focal_frame, probe)
        before = focal_frame.traces.copy()
        window_signals(focal_frame, focal_window.recenter(t_star))
        assert np.array_equal(before, focal_frame.traces)


class TestEstimateTheta:
    def test_identity_is_exactly_one(self, rng):
        frame, idx, _ = random_windowed_frame(rng)
        profile, _ = random_profiles(rng, idx)
        assert estimate_theta(frame, profile, profile) == 1.0

    def test_scale_invariance(self, rng):
        frame, idx, _ = random_windowed_frame(rng)
        fixed, true = random_profiles(rng, idx)
        theta = estimate_theta(frame, fixed, true)
        scaled = RfFrame(3.7 * frame.traces, FS, 0.0, 0.02, idx)
        assert estimate_theta(scaled, fixed, true) == pytest.approx(theta, rel=1e-12)

    def test_mismatched_apertures_rejected(self, rng):
        frame, idx, _ = random_windowed_frame(rng)
        fixed, _ = random_profiles(rng, idx)
        other = DelayProfile(0.01, idx + 1, fixed.delays)
        with pytest.raises(ValueError):
            estimate_theta(frame, fixed, other)

    def test_zero_window_raises_division_error(self, rng):
        idx = np.arange(-4, 4)
        frame = RfFrame(np.zeros((8, 64)), FS, 0.0, 0.02, idx)
        fixed, true = random_profiles(rng, idx)
        with pytest.raises(ZeroDivisionError):
            estimate_theta(frame, fixed, true)

    def test_beamsum_first_order_stationarity(self, rng):
        # perturbing theta by +-1e-3 never decreases the objective
        frame, idx, (s0, s1) = random_windowed_frame(rng)
        fixed, true = random_profiles(rng, idx)
        theta = estimate_theta(frame, fixed, true)
        obj = _objective_factory(frame, fixed, true, s0, s1)
        assert obj(theta + 1e-3) >= obj(theta)
        assert obj(theta - 1e-3) >= obj(theta)

    def test_matches_scan_plus_golden_oracle(self, rng):
        worst = 0.0
        for _ in range(12):
            frame, idx, (s0, s1) = random_windowed_frame(rng)
            fixed, true = random_profiles(rng, idx)
            theta = estimate_theta(frame, fixed, true)
            obj = _objective_factory(frame, fixed, true, s0, s1)
            grid = np.linspace(-4, 4, 4001)
            k = int(np.argmin([obj(g) for g in grid]))
            refined = minimize_scalar(
                obj, bracket=(grid[k - 1], grid[k], grid[k + 1]),
                method="golden", options={"xtol": 1e-12},
            )
            worst = max(worst, abs(refined.x - theta))
        assert worst <= 1e-6

    def test_per_element_form_is_the_printed_formula(self, rng):
        # the literal printed form keeps both conjugate products in the
        # numerator but no factor 2 in the denominator, so the identity case
        # evaluates to 2, not 1
        frame, idx, _ = random_windowed_frame(rng)
        profile, _ = random_profiles(rng, idx)
        assert estimate_theta(frame, profile, profile, form="per_element") == pytest.approx(2.0)

    def test_unknown_form_rejected(self, rng):
        frame, idx, _ = random_windowed_frame(rng)
        fixed, true = random_profiles(rng, idx)
        with pytest.raises(ValueError):
            estimate_theta(frame, fixed, true, form="bogus")


def _objective_factory(frame, fixed, true, s0, s1):
    """Independent realization of the discrete LS objective (documented
    conventions: crop to support, rebase delays, pad to a power of two at or
    above twice the width plus the shift span, Nyquist bin dropped)."""
    offset = min(fixed.delays.min(), true.delays.min())
    df = fixed.delays - offset
    dt = true.delays - offset
    width = s1 - s0
    span = int(np.ceil(max(df.max(), dt.max()) * FS)) + 4
    nfft = 1 << int(max(2 * width, width + span) - 1).bit_length()
    rows = [frame.row(i) for i in fixed.element_indices]
    spectra = np.fft.fft(frame.traces[rows, s0:s1], n=nfft, axis=1)
    if nfft % 2 == 0:
        spectra[:, nfft // 2] = 0.0
    freqs = np.fft.fftfreq(nfft, d=1.0 / FS)
    a = np.sum(spectra * np.exp(-2j * np.pi * freqs[None, :] * df[:, None]), axis=0)
    b = np.sum(spectra * np.exp(-2j * np.pi * freqs[None, :] * dt[:, None]), axis=0)
    return lambda theta: float(np.sum(np.abs(theta * a - b) ** 2))


class TestPlancherelConsistency:
    def test_time_domain_norm_equals_frequency_expression(self, rng):
        # || g_tidas - g_das ||^2 in time equals the frequency-domain expression
        for _ in range(5):
            frame, idx, (s0, s1) = random_windowed_frame(rng)
            fixed, true = random_profiles(rng, idx)
            theta = estimate_theta(frame, fixed, true)
            offset = min(fixed.delays.min(), true.delays.min())
            df = fixed.delays - offset
            dt = true.delays - offset
            width = s1 - s0
            span = int(np.ceil(max(df.max(), dt.max()) * FS)) + 4
            nfft = 1 << int(max(2 * width, width + span) - 1).bit_length()
            rows = [frame.row(i) for i in idx]
            seg = frame.traces[rows, s0:s1]
            spectra = np.fft.fft(seg, n=nfft, axis=1)
            if nfft % 2 == 0:
                spectra[:, nfft // 2] = 0.0
            freqs = np.fft.fftfreq(nfft, d=1.0 / FS)
            a = np.sum(spectra * np.exp(-2j * np.pi * freqs[None, :] * df[:, None]), axis=0)
            b = np.sum(spectra * np.exp(-2j * np.pi * freqs[None, :] * dt[:, None]), axis=0)
            diff_freq = np.sum(np.abs(theta * a - b) ** 2) / nfft
            g_tidas = theta * np.fft.ifft(a)
            g_das = np.fft.ifft(b)
            diff_time = np.sum(np.abs(g_tidas - g_das) ** 2)
            assert diff_time == pytest.approx(diff_freq, rel=1e-10)


class TestTidasPsf:
    def test_zero_theta_gives_zero_trace(self, rng):
        frame, idx, _ = random_windowed_frame(rng)
        fixed, _ = random_profiles(rng, idx)
        out = tidas_psf(frame, fixed, 0.0)
        assert not out.samples.any()

    def test_non_finite_theta_rejected(self, rng):
        frame, idx, _ = random_windowed_frame(rng)
        fixed, _ = random_profiles(rng, idx)
        with pytest.raises(ValueError):
            tidas_psf(frame, fixed, np.nan)

    def test_reduction_identity_exact(self, probe, rx_rule, focal_frame, focal_window):
        t_star = expected_arrival_time((0.0, 25e-3), focal_frame, probe)
        windowed = window_signals(focal_frame, focal_window.recenter(t_star))
        aperture = rx_aperture(25e-3, rx_rule, probe)
        true = rx_delay_profile(25e-3, aperture, probe)
        theta = estimate_theta(windowed, true, true)
        assert theta == 1.0
        candidate = tidas_psf(windowed, true, theta)
        reference = das_psf(windowed, (0.0, 25e-3), probe, rx_rule)
        assert np.array_equal(candidate.samples, reference.samples)

    def test_crop_matches_full_computation(self, probe, rx_rule, focal_frame, focal_window):
        t_star = expected_arrival_time((0.0, 25e-3), focal_frame, probe)
        windowed = window_signals(focal_frame, focal_window.recenter(t_star))
        aperture = rx_aperture(25e-3, rx_rule, probe)
        fixed = rx_delay_profile(20e-3, aperture, probe)
        full = tidas_psf(windowed, fixed, 1.3)
        cropped = tidas_psf(windowed, fixed, 1.3, crop=True)
        assert np.allclose(full.samples, cropped.samples, rtol=0, atol=1e-9 * np.max(np.abs(full.samples)))


class TestThetaMatrix:
    def test_sweep_shape_diagonal_and_smoothness(self, probe, tx_rule, rx_rule, focal_window):
        grid = np.linspace(20e-3, 30e-3, 9)
        matrix = theta_matrix_sweep(
            grid, probe, tx_rule, rx_rule,
            tx_focus_depth=25e-3, window_half_width=focal_window.half_width,
        )
        assert matrix.values.shape == (9, 9)
        assert np.allclose(np.diag(matrix.values), 1.0, atol=1e-6)
        assert np.all(np.isfinite(matrix.values))
        # smooth variation along rows near the diagonal (measured bound)
        steps = np.abs(np.diff(matrix.values, axis=1))
        assert steps.max() < 0.5

    def test_sweep_worker_count_invariance(self, probe, tx_rule, rx_rule, focal_window):
        grid = np.linspace(22e-3, 28e-3, 4)
        kwargs = dict(tx_focus_depth=25e-3, window_half_width=focal_window.half_width)
        serial = theta_matrix_sweep(grid, probe, tx_rule, rx_rule, workers=1, **kwargs)
        parallel = theta_matrix_sweep(grid, probe, tx_rule, rx_rule, workers=2, **kwargs)
        assert np.array_equal(serial.values, parallel.values)

    def test_csv_round_trip_at_nine_digits(self, tmp_path, rng):
        refs = np.linspace(10e-3, 30e-3, 5)
        targets = np.linspace(5e-3, 40e-3, 7)
        values = rng.uniform(0.5, 1.5, (5, 7))
        matrix = ThetaMatrix(refs, targets, values)
        path = tmp_path / "theta.csv"
        matrix.save_csv(path)
        loaded = ThetaMatrix.load_csv(path)
        assert np.allclose(loaded.values, values, rtol=1e-8)
        # writing the loaded matrix again is byte-identical (9 digit fixpoint)
        path2 = tmp_path / "theta2.csv"
        loaded.save_csv(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_interpolate_row_replaces_missing_with_zero(self):
        matrix = ThetaMatrix(
            np.array([10e-3]), np.array([10e-3, 20e-3, 30e-3]),
            np.array([[1.0, np.nan, 1.2]]),
        )
        thetas = matrix.interpolate_row(10e-3, np.array([10e-3, 20e-3, 30e-3]))
        assert thetas[1] == 0.0
        assert thetas[0] == 1.0 and thetas[2] == 1.2

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ThetaMatrix(np.array([1.0]), np.array([1.0, 2.0]), np.ones((2, 2)))

    def test_default_grid_count_is_600(self):
        from tidas.experiments import DepthGrid

        grid = DepthGrid()
        assert grid.count == 600
        assert grid.values[0] == pytest.approx(2e-3)
        assert grid.values[-1] == pytest.approx(42e-3)


class TestEstimateThetaAligned:
    def test_identity_is_one(self, probe, tx_rule, rx_rule):
        frame = synthesize_frame(ScattererSet.on_axis([25e-3]), 25e-3, probe, tx_rule)
        t_star = expected_arrival_time((0.0, 25e-3), frame, probe)
        profile = rx_delay_profile(25e-3, rx_aperture(25e-3, rx_rule, probe), probe)
        theta = estimate_theta_aligned(frame, TimeWindow(t_star, 1e-7), profile, profile)
        assert theta == 1.0

    def test_matches_time_domain_least_squares(self, probe, tx_rule, rx_rule):
        from tidas.das import delayed_sum
        from tidas.metrics import window_bounds

        frame = synthesize_frame(ScattererSet.on_axis([28e-3]), 25e-3, probe, tx_rule)
        t_star = expected_arrival_time((0.0, 28e-3), frame, probe)
        window = TimeWindow(t_star, 1e-7)
        fixed = rx_delay_profile(25e-3, rx_aperture(25e-3, rx_rule, probe), probe)
        true = rx_delay_profile(28e-3, rx_aperture(28e-3, rx_rule, probe), probe)
        theta = estimate_theta_aligned(frame, window, fixed, true)
        a = delayed_sum(frame, fixed.element_indices, fixed.delays).samples
        b = delayed_sum(frame, true.element_indices, true.delays).samples
        lo, hi = window_bounds(frame.n_samples, frame.t0, frame.sampling_frequency,
                               window.center, window.half_width)
        brute = minimize_scalar(lambda th: float(np.sum((th * a[lo:hi] - b[lo:hi]) ** 2)),
                                bracket=(0.0, 1.0, 4.0), method="golden",
                                options={"xtol": 1e-12})
        assert theta == pytest.approx(brute.x, abs=1e-8)


class TestTidasLine:
    def test_theta_length_must_match(self, probe, focal_frame, focal_window, rx_rule):
        fixed = rx_delay_profile(25e-3, rx_aperture(25e-3, rx_rule, probe), probe)
        with pytest.raises(ValueError):
            tidas_line(focal_frame, fixed, [1.0, 1.0], np.array([25e-3]), probe,
                       window_half_width=focal_window.half_width)

    def test_degenerate_mode_reduces_to_das(self, probe, rx_rule, tx_rule, focal_window):
        # matched profile per pixel, theta = 1, shared envelope window
        frame = synthesize_frame(ScattererSet.on_axis([25e-3]), 25e-3, probe, tx_rule)
        eps = focal_window.half_width
        for depth in (21e-3, 25e-3, 31e-3):
            fixed = rx_delay_profile(depth, rx_aperture(depth, rx_rule, probe), probe)
            tidas_value = tidas_line(frame, fixed, [1.0], np.array([depth]), probe,
                                     window_half_width=eps)
            das_values = das_line(frame, np.array([depth]), probe, rx_rule,
                                  envelope_half_width=eps)
            assert tidas_value[0] == pytest.approx(das_values[0], rel=1e-12)

    def test_single_pass_contract(self, probe, rx_rule, tx_rule, focal_window):
        frame = synthesize_frame(
            ScattererSet.on_axis(np.linspace(10e-3, 40e-3, 5)), 25e-3, probe, tx_rule
        )
        fixed = rx_delay_profile(25e-3, rx_aperture(25e-3, rx_rule, probe), probe)
        depths = np.linspace(5e-3, 40e-3, 120)
        reset_delay_counter()
        tidas_line(frame, fixed, np.ones(120), depths, probe,
                   window_half_width=focal_window.half_width)
        assert delay_counter() == len(fixed)

    def test_aligned_theta_row_tracks_das_near_reference(self, probe, rx_rule, tx_rule,
                                                         focal_window):
        depths = np.linspace(23e-3, 27e-3, 5)
        thetas = theta_row_aligned(
            25e-3, depths, probe, tx_rule, rx_rule,
            window_half_width=focal_window.half_width,
        )
        frame = synthesize_frame(ScattererSet.on_axis([25e-3]), 25e-3, probe, tx_rule)
        fixed = rx_delay_profile(25e-3, rx_aperture(25e-3, rx_rule, probe), probe)
        line = tidas_line(frame, fixed, thetas, depths, probe,
                          window_half_width=focal_window.half_width)
        das_values = das_line(frame, depths, probe, rx_rule)
        assert line[2] == pytest.approx(das_values[2], rel=0.05)
