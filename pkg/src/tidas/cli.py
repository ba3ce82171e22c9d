"""Command-line entry point: simulation, reconstruction, sweeps, and benchmarks."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, das, metrics
from .experiments import (
    ExperimentConfig,
    build_focus_context,
    run_all,
    run_bench,
    run_error_sweep,
    run_line_experiments,
    run_peak_fwhm_sweep,
    _write_csv,
)
from .geometry import rx_aperture, rx_delay_profile
from .simulate import ScattererSet, save_frame, synthesize_frame
from .tidas import TimeWindow, estimate_theta, theta_matrix_sweep, tidas_psf, window_signals

log = logging.getLogger(__name__)

SUBCOMMANDS = ("simulate", "psf", "theta", "sweep-errors", "sweep-fwhm", "line", "bench", "all")

# override key -> (path into the config dict, type)
OVERRIDE_KEYS = {
    "probe.element_count": (("probe", "element_count"), int),
    "probe.pitch": (("probe", "pitch"), float),
    "probe.center_frequency": (("probe", "center_frequency"), float),
    "probe.sampling_frequency": (("probe", "sampling_frequency"), float),
    "probe.sound_speed": (("probe", "sound_speed"), float),
    "probe.pulse_cycles": (("probe", "pulse_cycles"), float),
    "probe.fractional_bandwidth": (("probe", "fractional_bandwidth"), float),
    "grid.min": (("depth_grid", "min"), float),
    "grid.max": (("depth_grid", "max"), float),
    "grid.count": (("depth_grid", "count"), int),
    "seed": (("seed",), int),
    "workers": (("parallel_workers",), int),
    "rx_f_number": (("rx_f_number",), float),
    "kossoff_parameter": (("kossoff_parameter",), float),
    "sweep.frequency": (("sweep_frequency",), float),
    "sweep.tx_focus": (("sweep_tx_focus",), float),
    "spreading": (("spreading",), lambda v: v.lower() in ("1", "true", "yes")),
    "noise_amplitude": (("noise_amplitude",), float),
    "theta_form": (("theta_form",), str),
    "delay_method": (("delay_method",), str),
    "bench.trials": (("bench_trials",), int),
    "bench.sweep_points": (("bench_sweep_points",), int),
    "bench.full_scale": (("bench_full_scale",), lambda v: v.lower() in ("1", "true", "yes")),
    # command-scoped keys
    "depth": ((), float),
    "tx_focus": ((), float),
    "reference_depth": ((), float),
}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tidas",
        description="Delay-and-sum beamforming experiments with a time-invariant fast path.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in (
        ("simulate", "synthesize one single-scatterer RF frame and persist it"),
        ("psf", "write one DAS + tiDAS PSF pair and its metrics"),
        ("theta", "scaling-weight matrix over the depth grid"),
        ("sweep-errors", "theta matrix plus local/global error maps"),
        ("sweep-fwhm", "peak height and FWHM sweep"),
        ("line", "line reconstructions and the side-lobe table"),
        ("bench", "timing benchmark of the five experiment rows"),
        ("all", "run the four experiment families in order"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, default=None, help="JSON configuration file")
        cmd.add_argument(
            "--overrides",
            nargs="*",
            default=[],
            metavar="KEY=VALUE",
            help="configuration overrides (highest precedence)",
        )
        cmd.add_argument("--output-dir", type=Path, default=None,
                         help="artifact directory (default: $TIDAS_OUT or ./tidas_out)")
        cmd.add_argument("--workers", type=int, default=None, help="parallel worker count")
    return parser


def _parse_overrides(pairs: Sequence[str]) -> dict:
    parsed = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"override {pair!r} is not KEY=VALUE")
        key, raw = pair.split("=", 1)
        if key not in OVERRIDE_KEYS:
            raise UsageError(f"unknown override key {key!r}")
        _, caster = OVERRIDE_KEYS[key]
        try:
            parsed[key] = caster(raw)
        except ValueError as exc:
            raise UsageError(f"override {key!r}: {exc}") from exc
    return parsed


def resolve_config(
    config_path: Optional[Path],
    overrides: dict,
    output_dir: Optional[Path],
    workers: Optional[int],
) -> ExperimentConfig:
    raw = {}
    if config_path is not None:
        raw = json.loads(Path(config_path).read_text())
    cfg = ExperimentConfig.from_dict(raw)
    data = cfg.to_dict()
    for key, value in overrides.items():
        path, _ = OVERRIDE_KEYS[key]
        if not path:
            continue  # command-scoped key, handled by the subcommand
        node = data
        for part in path[:-1]:
            node = node[part]
        node[path[-1]] = value
    cfg = ExperimentConfig.from_dict(data)
    if output_dir is None:
        env = os.environ.get("TIDAS_OUT")
        output_dir = Path(env) if env else cfg.output_dir
    cfg.output_dir = Path(output_dir)
    if workers is not None:
        cfg.parallel_workers = workers
    return cfg


def _write_manifest(cfg: ExperimentConfig, command: str) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
    }
    path = cfg.output_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _cmd_simulate(cfg: ExperimentConfig, overrides: dict) -> None:
    depth = overrides.get("depth", 25e-3)
    tx_focus = overrides.get("tx_focus", cfg.sweep_tx_focus)
    probe = cfg.probe_at(cfg.sweep_frequency)
    frame = synthesize_frame(
        ScattererSet.on_axis([depth]), tx_focus, probe, cfg.tx_rule,
        spreading=cfg.spreading, noise_amplitude=cfg.noise_amplitude,
        rng=np.random.default_rng(cfg.seed),
    )
    paths = save_frame(frame, cfg.output_dir / f"frame_{depth * 1e3:g}mm")
    print("\n".join(str(p) for p in paths))


def _cmd_psf(cfg: ExperimentConfig, overrides: dict) -> None:
    depth = overrides.get("depth", 25e-3)
    reference = overrides.get("reference_depth", cfg.sweep_tx_focus)
    probe = cfg.probe_at(cfg.sweep_frequency)
    ctx = build_focus_context(cfg, cfg.sweep_frequency, reference)
    frame = synthesize_frame(ScattererSet.on_axis([depth]), reference, probe, cfg.tx_rule,
                             spreading=cfg.spreading)
    arrival = das.expected_arrival_time((0.0, depth), frame, probe)
    window = TimeWindow(arrival, ctx.window_half_width)
    windowed = window_signals(frame, window)
    aperture = rx_aperture(depth, cfg.rx_rule, probe)
    true = rx_delay_profile(depth, aperture, probe)
    fixed = rx_delay_profile(reference, aperture, probe)
    theta = estimate_theta(windowed, fixed, true, cfg.theta_form)
    cand = tidas_psf(windowed, fixed, theta, cfg.delay_method)
    ref = das.das_psf(frame, (0.0, depth), probe, cfg.rx_rule, cfg.delay_method)
    ref_win = das.das_psf(windowed, (0.0, depth), probe, cfg.rx_rule, cfg.delay_method)
    name = f"psf_{depth * 1e3:g}mm"
    path = _write_csv(
        cfg.output_dir / f"{name}.csv",
        ("time_s", "das", "das_windowed", "tidas"),
        zip(ref.times, ref.samples, ref_win.samples, cand.samples),
    )
    peak_t, peak_a = metrics.peak_time(cand)
    report = metrics.MetricsReport(
        peak_time=peak_t,
        peak_amplitude=peak_a,
        fwhm_time=metrics.fwhm(cand),
        fwhm_axial=probe.sound_speed * metrics.fwhm(cand) / 2.0,
        local_error=metrics.local_error(ref_win, cand, window),
        global_error=metrics.global_error(ref_win, cand),
    )
    metrics.write_reports(cfg.output_dir / f"{name}_metrics.csv", [report])
    print(path)
    print(cfg.output_dir / f"{name}_metrics.csv")


def _cmd_theta(cfg: ExperimentConfig, overrides: dict) -> None:
    probe = cfg.probe_at(cfg.sweep_frequency)
    ctx = build_focus_context(cfg, cfg.sweep_frequency, cfg.sweep_tx_focus)
    matrix = theta_matrix_sweep(
        cfg.depth_grid.values,
        probe,
        cfg.tx_rule,
        cfg.rx_rule,
        tx_focus_depth=cfg.sweep_tx_focus,
        window_half_width=ctx.window_half_width,
        form=cfg.theta_form,
        spreading=cfg.spreading,
        workers=cfg.parallel_workers,
    )
    path = cfg.output_dir / "theta_matrix.csv"
    matrix.save_csv(path)
    print(path)


def parse_and_dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        overrides = _parse_overrides(args.overrides)
        cfg = resolve_config(args.config, overrides, args.output_dir, args.workers)
    except (UsageError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"tidas: {exc}", file=sys.stderr)
        return 2
    try:
        _write_manifest(cfg, args.subcommand)
        if args.subcommand == "simulate":
            _cmd_simulate(cfg, overrides)
        elif args.subcommand == "psf":
            _cmd_psf(cfg, overrides)
        elif args.subcommand == "theta":
            _cmd_theta(cfg, overrides)
        elif args.subcommand == "sweep-errors":
            for path in run_error_sweep(cfg):
                print(path)
        elif args.subcommand == "sweep-fwhm":
            for path in run_peak_fwhm_sweep(cfg):
                print(path)
        elif args.subcommand == "line":
            for path in run_line_experiments(cfg):
                print(path)
        elif args.subcommand == "bench":
            print(run_bench(cfg))
        elif args.subcommand == "all":
            for path in run_all(cfg):
                print(path)
        else:  # unreachable: argparse restricts choices
            return 2
    except Exception as exc:  # runtime failure -> diagnostic on stderr, exit 1
        log.exception("command failed")
        print(f"tidas: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    logging.basicConfig(level=os.environ.get("TIDAS_LOGLEVEL", "WARNING"))
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
