"""Experiment orchestration: sweeps, line reconstructions, and the timing bench.

Outputs are plain CSV (comma separator, '.' decimal, LF endings, one header row)
under the configured output directory; bodies are bit-reproducible for a fixed
configuration and seed.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from . import das, metrics
from .geometry import ApertureRule, FNumber, Kossoff, ProbeConfig, rx_aperture, rx_delay_profile
from .simulate import ScattererSet, synthesize_frame
from .tidas import (
    ThetaMatrix,
    TimeWindow,
    estimate_theta,
    fwhm_window,
    save_matrix_csv,
    theta_row_aligned,
    tidas_line,
    tidas_psf,
    window_signals,
)

__all__ = [
    "DepthGrid",
    "ExperimentConfig",
    "scenario_scatterers",
    "FocusContext",
    "build_focus_context",
    "run_peak_fwhm_sweep",
    "run_error_sweep",
    "run_line_experiments",
    "run_bench",
    "run_all",
]

log = logging.getLogger(__name__)

SCENARIOS = ("five_uniform", "five_ramp", "hundred_uniform")


@dataclass(frozen=True)
class DepthGrid:
    min: float = 2.0e-3
    max: float = 42.0e-3
    count: int = 600

    def __post_init__(self) -> None:
        if not 0 < self.min < self.max:
            raise ValueError("depth grid needs 0 < min < max")
        if self.count < 2:
            raise ValueError("depth grid needs at least 2 points")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)


@dataclass
class ExperimentConfig:
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    depth_grid: DepthGrid = field(default_factory=DepthGrid)
    tx_focus_depths: Tuple[float, ...] = (15.0e-3, 25.0e-3, 35.0e-3)
    center_frequencies: Tuple[float, ...] = (5.0e6, 7.0e6)
    reference_depths: Tuple[float, ...] = (25.0e-3, 35.0e-3)
    scatterer_scenarios: Tuple[str, ...] = SCENARIOS
    output_dir: Path = Path("tidas_out")
    parallel_workers: int = 1
    seed: int = 0
    rx_f_number: float = 1.0
    kossoff_parameter: float = 0.6
    sweep_frequency: float = 7.0e6
    sweep_tx_focus: float = 25.0e-3
    spreading: bool = True
    noise_amplitude: float = 0.0
    theta_form: str = "beamsum"
    delay_method: str = "linear"
    bench_trials: int = 20
    bench_sweep_points: int = 100
    bench_full_scale: bool = False

    def __post_init__(self) -> None:
        self.output_dir = Path(self.output_dir)
        for name in self.scatterer_scenarios:
            if name not in SCENARIOS:
                raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")

    @property
    def rx_rule(self) -> ApertureRule:
        return FNumber(self.rx_f_number)

    @property
    def tx_rule(self) -> ApertureRule:
        return Kossoff(self.kossoff_parameter)

    def probe_at(self, frequency: float) -> ProbeConfig:
        return replace(self.probe, center_frequency=frequency)

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["output_dir"] = str(self.output_dir)
        return raw

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        data = dict(raw)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        if "probe" in data and isinstance(data["probe"], dict):
            data["probe"] = ProbeConfig(**data["probe"])
        if "depth_grid" in data and isinstance(data["depth_grid"], dict):
            data["depth_grid"] = DepthGrid(**data["depth_grid"])
        for key in ("tx_focus_depths", "center_frequencies", "reference_depths", "scatterer_scenarios"):
            if key in data and isinstance(data[key], list):
                data[key] = tuple(data[key])
        return cls(**data)


def scenario_scatterers(name: str) -> ScattererSet:
    """Scatterer layouts of the line experiments; depths span 10-40 mm."""
    if name == "five_uniform":
        return ScattererSet.on_axis(np.linspace(10e-3, 40e-3, 5))
    if name == "five_ramp":
        return ScattererSet.on_axis(np.linspace(10e-3, 40e-3, 5), np.linspace(1.0, 2.0, 5))
    if name == "hundred_uniform":
        return ScattererSet.on_axis(np.linspace(10e-3, 40e-3, 100))
    raise ValueError(f"unknown scenario {name!r}")


@dataclass(frozen=True)
class FocusContext:
    """Per-(frequency, transmit focus) assets shared by a whole sweep."""

    probe: ProbeConfig
    tx_focus: float
    window_half_width: float
    focal_fwhm: float
    focal_peak: float
    focal_arrival: float

    @property
    def focal_fwhm_axial(self) -> float:
        return self.probe.sound_speed * self.focal_fwhm / 2.0


def build_focus_context(cfg: ExperimentConfig, frequency: float, tx_focus: float) -> FocusContext:
    probe = cfg.probe_at(frequency)
    frame = synthesize_frame(
        ScattererSet.on_axis([tx_focus]), tx_focus, probe, cfg.tx_rule, spreading=cfg.spreading
    )
    psf = das.das_psf(frame, (0.0, tx_focus), probe, cfg.rx_rule, cfg.delay_method)
    arrival = das.expected_arrival_time((0.0, tx_focus), frame, probe)
    window = fwhm_window(psf, arrival)
    _, peak = metrics.peak_time(psf)
    return FocusContext(
        probe=probe,
        tx_focus=tx_focus,
        window_half_width=window.half_width,
        focal_fwhm=metrics.fwhm(psf),
        focal_peak=peak,
        focal_arrival=arrival,
    )


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def _pmap(fn, items: list, workers: int, chunksize: int = 4) -> list:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items, chunksize=chunksize))
    return [fn(item) for item in items]


# one (frequency, focus, depth) cell of the peak/FWHM sweep
def _peak_fwhm_cell(args) -> tuple:
    cfg, ctx, depth = args
    probe = ctx.probe
    try:
        frame = synthesize_frame(
            ScattererSet.on_axis([depth]), ctx.tx_focus, probe, cfg.tx_rule, spreading=cfg.spreading
        )
        arrival = das.expected_arrival_time((0.0, depth), frame, probe)
        windowed = window_signals(frame, TimeWindow(arrival, ctx.window_half_width))
        bounds = metrics.window_bounds(
            frame.n_samples, frame.t0, frame.sampling_frequency, arrival, ctx.window_half_width
        )
        aperture = rx_aperture(depth, cfg.rx_rule, probe)
        true = rx_delay_profile(depth, aperture, probe)
        fixed = rx_delay_profile(ctx.tx_focus, aperture, probe)
        theta = estimate_theta(windowed, fixed, true, cfg.theta_form, support=bounds)
        cand = tidas_psf(windowed, fixed, theta, cfg.delay_method, crop=True, support=bounds)
        ref_full = das.das_psf(frame, (0.0, depth), probe, cfg.rx_rule, cfg.delay_method)
        ref_win = das.das_psf(windowed, (0.0, depth), probe, cfg.rx_rule, cfg.delay_method)
        _, das_peak = metrics.peak_time(ref_full)
        _, tidas_peak = metrics.peak_time(cand)
        das_fwhm = metrics.fwhm(ref_win)
        tidas_fwhm = metrics.fwhm(cand)
        return (
            probe.center_frequency,
            ctx.tx_focus,
            depth,
            theta,
            das_peak,
            tidas_peak,
            das_peak / ctx.focal_peak,
            tidas_peak / ctx.focal_peak,
            das_fwhm,
            tidas_fwhm,
            abs(das_fwhm - tidas_fwhm),
        )
    except (ValueError, ZeroDivisionError) as exc:
        log.warning("peak/FWHM cell f=%.1f MHz focus=%.1f mm z=%.2f mm failed: %s",
                    probe.center_frequency / 1e6, ctx.tx_focus * 1e3, depth * 1e3, exc)
        nan = float("nan")
        return (probe.center_frequency, ctx.tx_focus, depth) + (nan,) * 8


PEAK_FWHM_COLUMNS = (
    "frequency_hz",
    "tx_focus_m",
    "depth_m",
    "theta",
    "das_peak",
    "tidas_peak",
    "das_peak_norm",
    "tidas_peak_norm",
    "das_fwhm_s",
    "tidas_fwhm_s",
    "abs_fwhm_diff_s",
)


def run_peak_fwhm_sweep(cfg: ExperimentConfig) -> List[Path]:
    """Single-scatterer peak/FWHM sweep over every (frequency, focus, depth).

    The FWHM pair compares tiDAS with DAS applied to the same windowed frame so
    window-edge effects stay common mode; peak heights are normalized to the DAS
    peak at the transmit focus of each configuration.
    """
    depths = cfg.depth_grid.values
    rows: List[tuple] = []
    boxes: List[tuple] = []
    for frequency in cfg.center_frequencies:
        for focus in cfg.tx_focus_depths:
            ctx = build_focus_context(cfg, frequency, focus)
            cells = _pmap(_peak_fwhm_cell, [(cfg, ctx, z) for z in depths], cfg.parallel_workers)
            rows.extend(cells)
            diffs = np.array([c[10] for c in cells], dtype=float)
            diffs = diffs[np.isfinite(diffs)]
            if diffs.size:
                q1, med, q3 = np.percentile(diffs, [25, 50, 75])
                iqr = q3 - q1
                lo = diffs[diffs >= q1 - 1.5 * iqr].min()
                hi = diffs[diffs <= q3 + 1.5 * iqr].max()
                outliers = int(np.sum((diffs < q1 - 1.5 * iqr) | (diffs > q3 + 1.5 * iqr)))
                boxes.append((frequency, focus, diffs.size, med, q1, q3, lo, hi, outliers))
    out = cfg.output_dir
    paths = [
        _write_csv(out / "peak_fwhm.csv", PEAK_FWHM_COLUMNS, rows),
        _write_csv(
            out / "peak_fwhm_box.csv",
            ("frequency_hz", "tx_focus_m", "n", "median_s", "q1_s", "q3_s",
             "whisker_lo_s", "whisker_hi_s", "n_outliers"),
            boxes,
        ),
    ]
    return paths


# one target-depth column of the error sweep: thetas and errors against all rows
def _error_column(args) -> tuple:
    cfg, probe, window_half_width, refs, target = args
    frame = synthesize_frame(
        ScattererSet.on_axis([target]), cfg.sweep_tx_focus, probe, cfg.tx_rule,
        spreading=cfg.spreading,
    )
    arrival = das.expected_arrival_time((0.0, target), frame, probe)
    window = TimeWindow(arrival, window_half_width)
    thetas = np.full(len(refs), np.nan)
    local = np.full(len(refs), np.nan)
    glob = np.full(len(refs), np.nan)
    try:
        windowed = window_signals(frame, window)
        bounds = metrics.window_bounds(
            frame.n_samples, frame.t0, frame.sampling_frequency, window.center, window.half_width
        )
        aperture = rx_aperture(target, cfg.rx_rule, probe)
        true = rx_delay_profile(target, aperture, probe)
        reference = das.das_psf(windowed, (0.0, target), probe, cfg.rx_rule, cfg.delay_method)
    except (ValueError, ZeroDivisionError) as exc:
        log.warning("error-sweep column z=%.2f mm failed: %s", target * 1e3, exc)
        return thetas, local, glob
    for i, ref_depth in enumerate(refs):
        try:
            fixed = rx_delay_profile(ref_depth, aperture, probe)
            theta = estimate_theta(windowed, fixed, true, cfg.theta_form, support=bounds)
            cand = tidas_psf(windowed, fixed, theta, cfg.delay_method, crop=True, support=bounds)
            thetas[i] = theta
            local[i] = metrics.local_error(reference, cand, window)
            glob[i] = metrics.global_error(reference, cand)
        except (ValueError, ZeroDivisionError) as exc:
            log.warning("error-sweep cell (ref %.2f, z %.2f mm): %s", ref_depth * 1e3, target * 1e3, exc)
    return thetas, local, glob


def run_error_sweep(cfg: ExperimentConfig) -> List[Path]:
    """Full (reference depth x scatterer depth) theta and error maps.

    Emits the theta matrix, local/global error matrices, and the below-5% mask;
    per-cell estimation failures become NaN cells rather than aborting.
    """
    probe = cfg.probe_at(cfg.sweep_frequency)
    ctx = build_focus_context(cfg, cfg.sweep_frequency, cfg.sweep_tx_focus)
    depths = cfg.depth_grid.values
    refs = depths
    columns = _pmap(
        _error_column,
        [(cfg, probe, ctx.window_half_width, refs, z) for z in depths],
        cfg.parallel_workers,
        chunksize=2,
    )
    thetas = np.stack([c[0] for c in columns], axis=1)
    local = np.stack([c[1] for c in columns], axis=1)
    glob = np.stack([c[2] for c in columns], axis=1)
    mask = np.where(np.isfinite(local), (local < 0.05).astype(float), np.nan)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    ThetaMatrix(refs, depths, thetas).save_csv(out / "theta_matrix.csv")
    save_matrix_csv(out / "error_local.csv", refs, depths, local)
    save_matrix_csv(out / "error_global.csv", refs, depths, glob)
    save_matrix_csv(out / "error_mask.csv", refs, depths, mask)
    return [out / "theta_matrix.csv", out / "error_local.csv", out / "error_global.csv",
            out / "error_mask.csv"]


def _sidelobe_guard(ctx: FocusContext, depths: np.ndarray, scatterer_depths: np.ndarray) -> int:
    """One focal FWHM per side, shrunk when scatterers are denser than that."""
    step = depths[1] - depths[0]
    guard = int(np.ceil(ctx.focal_fwhm_axial / step))
    if len(scatterer_depths) > 1:
        spacing = np.min(np.diff(np.sort(scatterer_depths))) / step
        guard = min(guard, int((spacing - 1) // 2))
    return max(guard, 1)


def run_line_experiments(cfg: ExperimentConfig) -> List[Path]:
    """DAS and tiDAS line reconstructions for every scenario x reference depth.

    tiDAS uses the reference profile (transmit focus = reference depth) and
    aligned-window thetas interpolated onto the pixel grid; the side-lobe table
    follows scenario, depth, DAS level, tiDAS level, relative error.
    """
    probe = cfg.probe_at(cfg.sweep_frequency)
    depths = cfg.depth_grid.values
    out = cfg.output_dir
    paths: List[Path] = []
    table: List[tuple] = []
    for ref_depth in cfg.reference_depths:
        ctx = build_focus_context(cfg, cfg.sweep_frequency, ref_depth)
        thetas = theta_row_aligned(
            ref_depth,
            depths,
            probe,
            cfg.tx_rule,
            cfg.rx_rule,
            window_half_width=ctx.window_half_width,
            spreading=cfg.spreading,
            method=cfg.delay_method,
            workers=cfg.parallel_workers,
        )
        bad = ~np.isfinite(thetas)
        if bad.any():
            log.warning("theta row at %.1f mm: %d missing cells set to 0", ref_depth * 1e3, bad.sum())
            thetas[bad] = 0.0
        fixed = rx_delay_profile(ref_depth, rx_aperture(ref_depth, cfg.rx_rule, probe), probe)
        for scenario in cfg.scatterer_scenarios:
            scatterers = scenario_scatterers(scenario)
            frame = synthesize_frame(
                scatterers, ref_depth, probe, cfg.tx_rule, spreading=cfg.spreading,
                noise_amplitude=cfg.noise_amplitude, rng=np.random.default_rng(cfg.seed),
            )
            das_values = das.das_line(frame, depths, probe, cfg.rx_rule, method=cfg.delay_method)
            tidas_values = tidas_line(
                frame, fixed, thetas, depths, probe,
                window_half_width=ctx.window_half_width, method=cfg.delay_method,
            )
            name = f"{scenario}_{ref_depth * 1e3:.0f}mm"
            paths.append(
                _write_csv(
                    out / "lines" / f"{name}.csv",
                    ("depth_m", "das", "tidas"),
                    zip(depths, das_values, tidas_values),
                )
            )
            guard = _sidelobe_guard(ctx, depths, scatterers.zs)
            das_sl, _ = metrics.sidelobe_stats(das_values, depths, scatterers.zs, guard)
            tidas_sl, rel = metrics.sidelobe_stats(
                tidas_values, depths, scatterers.zs, guard, reference=das_values
            )
            table.append((scenario, ref_depth, das_sl, tidas_sl, rel))
    paths.append(
        _write_csv(
            out / "sidelobes.csv",
            ("scenario", "reference_depth_m", "mean_das_sl_db", "mean_tidas_sl_db",
             "relative_sl_error"),
            table,
        )
    )
    return paths


def _median_time(op, trials: int) -> float:
    op()  # warm-up
    samples = []
    for _ in range(trials):
        start = time.perf_counter()
        op()
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def run_bench(cfg: ExperimentConfig) -> Path:
    """Wall-clock medians for the five experiment rows, plus DAS:tiDAS ratios.

    Frame synthesis and theta precomputation are excluded from the timed regions
    (thetas are reusable assets of the method); per-pixel delay-profile work is
    inside them for both methods, since that is the cost tiDAS removes.
    """
    if time.get_clock_info("perf_counter").resolution >= 1e-6:
        raise RuntimeError("perf_counter resolution is coarser than 1 microsecond; refusing to bench")
    trials = max(cfg.bench_trials, 1)
    probe = cfg.probe_at(cfg.sweep_frequency)
    ctx = build_focus_context(cfg, cfg.sweep_frequency, cfg.sweep_tx_focus)
    eps = ctx.window_half_width
    rows: List[tuple] = []

    # four PSF reconstructions in one configuration; the windowed frames are
    # prepared upstream (they are the tiDAS ops' contracted input), thetas are
    # precomputed assets of the method
    point_depths = np.array([10e-3, 20e-3, 30e-3, 40e-3])
    prepared = []
    for z in point_depths:
        frame = synthesize_frame(ScattererSet.on_axis([z]), cfg.sweep_tx_focus, probe, cfg.tx_rule,
                                 spreading=cfg.spreading)
        arrival = das.expected_arrival_time((0.0, z), frame, probe)
        aperture = rx_aperture(z, cfg.rx_rule, probe)
        true = rx_delay_profile(z, aperture, probe)
        fixed = rx_delay_profile(cfg.sweep_tx_focus, aperture, probe)
        windowed = window_signals(frame, TimeWindow(arrival, eps))
        bounds = metrics.window_bounds(
            frame.n_samples, frame.t0, frame.sampling_frequency, arrival, eps
        )
        theta = estimate_theta(windowed, fixed, true, cfg.theta_form, support=bounds)
        prepared.append((z, frame, windowed, bounds, fixed, theta))

    def das_points():
        for z, frame, _, _, _, _ in prepared:
            das.das_psf(frame, (0.0, z), probe, cfg.rx_rule, cfg.delay_method)

    def tidas_points():
        for z, _, windowed, bounds, fixed, theta in prepared:
            tidas_psf(windowed, fixed, theta, cfg.delay_method, crop=True, support=bounds)

    rows.append(("four_points", trials, _median_time(das_points, trials),
                 _median_time(tidas_points, trials)))

    # reduced-scale (points x configurations) sweep; full scale via flag
    n_sweep = cfg.depth_grid.count if cfg.bench_full_scale else min(cfg.bench_sweep_points,
                                                                    cfg.depth_grid.count)
    sweep_depths = np.linspace(cfg.depth_grid.min, cfg.depth_grid.max, n_sweep)
    sweep_cols = []
    for z in sweep_depths:
        frame = synthesize_frame(ScattererSet.on_axis([z]), cfg.sweep_tx_focus, probe, cfg.tx_rule,
                                 spreading=cfg.spreading)
        arrival = das.expected_arrival_time((0.0, z), frame, probe)
        windowed = window_signals(frame, TimeWindow(arrival, eps))
        bounds = metrics.window_bounds(
            frame.n_samples, frame.t0, frame.sampling_frequency, arrival, eps
        )
        sweep_cols.append((z, frame, windowed, bounds))

    # per cell: DAS re-reconstructs; tiDAS estimates its theta and reconstructs,
    # with the per-column true profile amortized over the row loop as in the sweep
    def das_sweep():
        for z, frame, _, _ in sweep_cols:
            for _ in sweep_depths:
                das.das_psf(frame, (0.0, z), probe, cfg.rx_rule, cfg.delay_method)

    def tidas_sweep():
        for z, _, windowed, bounds in sweep_cols:
            aperture = rx_aperture(z, cfg.rx_rule, probe)
            true = rx_delay_profile(z, aperture, probe)
            for ref in sweep_depths:
                fixed = rx_delay_profile(ref, aperture, probe)
                theta = estimate_theta(windowed, fixed, true, cfg.theta_form, support=bounds)
                tidas_psf(windowed, fixed, theta, cfg.delay_method, crop=True, support=bounds)

    rows.append((f"points_sweep_{n_sweep}x{n_sweep}", trials,
                 _median_time(das_sweep, trials), _median_time(tidas_sweep, trials)))

    # the three line scenarios at the first reference depth
    ref_depth = cfg.reference_depths[0]
    line_ctx = build_focus_context(cfg, cfg.sweep_frequency, ref_depth)
    depths = cfg.depth_grid.values
    thetas = theta_row_aligned(
        ref_depth, depths, probe, cfg.tx_rule, cfg.rx_rule,
        window_half_width=line_ctx.window_half_width, spreading=cfg.spreading,
        method=cfg.delay_method, workers=cfg.parallel_workers,
    )
    thetas = np.where(np.isfinite(thetas), thetas, 0.0)
    fixed = rx_delay_profile(ref_depth, rx_aperture(ref_depth, cfg.rx_rule, probe), probe)
    for scenario in cfg.scatterer_scenarios:
        frame = synthesize_frame(scenario_scatterers(scenario), ref_depth, probe, cfg.tx_rule,
                                 spreading=cfg.spreading)
        rows.append((
            f"line_{scenario}",
            trials,
            _median_time(lambda: das.das_line(frame, depths, probe, cfg.rx_rule,
                                              method=cfg.delay_method), trials),
            _median_time(lambda: tidas_line(frame, fixed, thetas, depths, probe,
                                            window_half_width=line_ctx.window_half_width,
                                            method=cfg.delay_method), trials),
        ))

    table = [(name, n, d, t, d / t if t > 0 else float("inf")) for name, n, d, t in rows]
    return _write_csv(
        cfg.output_dir / "bench.csv",
        ("experiment", "trials", "das_median_s", "tidas_median_s", "speedup"),
        table,
    )


def run_all(cfg: ExperimentConfig) -> List[Path]:
    """The four experiment families in publication order."""
    paths = run_peak_fwhm_sweep(cfg)
    paths += run_error_sweep(cfg)
    paths += run_line_experiments(cfg)
    paths.append(run_bench(cfg))
    return paths
