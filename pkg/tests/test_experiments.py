import csv
import json
from pathlib import Path

import numpy as np
import pytest

from tidas.experiments import (
    PEAK_FWHM_COLUMNS,
    DepthGrid,
    ExperimentConfig,
    build_focus_context,
    run_bench,
    run_error_sweep,
    run_line_experiments,
    run_peak_fwhm_sweep,
    scenario_scatterers,
)
from tidas.tidas import ThetaMatrix, load_matrix_csv


def tiny_config(tmp_path, **overrides):
    base = dict(
        depth_grid=DepthGrid(count=10),
        center_frequencies=(7e6,),
        tx_focus_depths=(25e-3,),
        reference_depths=(25e-3,),
        scatterer_scenarios=("five_uniform",),
        output_dir=tmp_path / "out",
        bench_trials=2,
        bench_sweep_points=4,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestConfig:
    def test_defaults_match_documented_values(self):
        cfg = ExperimentConfig()
        assert cfg.depth_grid == DepthGrid(2e-3, 42e-3, 600)
        assert cfg.tx_focus_depths == (15e-3, 25e-3, 35e-3)
        assert cfg.center_frequencies == (5e6, 7e6)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"not_a_key": 1})

    def test_round_trip_through_dict(self, tmp_path):
        cfg = tiny_config(tmp_path, seed=42)
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.seed == 42
        assert again.depth_grid == cfg.depth_grid
        assert again.probe == cfg.probe

    def test_unknown_scenario_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            tiny_config(tmp_path, scatterer_scenarios=("bogus",))


class TestScenarios:
    def test_five_uniform(self):
        sc = scenario_scatterers("five_uniform")
        assert len(sc) == 5
        assert np.allclose(sc.amplitudes, 1.0)
        assert sc.zs[0] == pytest.approx(10e-3) and sc.zs[-1] == pytest.approx(40e-3)

    def test_five_ramp_amplitudes_increase_with_depth(self):
        sc = scenario_scatterers("five_ramp")
        assert np.all(np.diff(sc.amplitudes) > 0)
        assert sc.amplitudes[0] == 1.0 and sc.amplitudes[-1] == 2.0

    def test_hundred_uniform(self):
        sc = scenario_scatterers("hundred_uniform")
        assert len(sc) == 100
        assert np.allclose(np.diff(sc.zs), sc.zs[1] - sc.zs[0])


class TestPeakFwhmSweep:
    def test_row_count_and_columns(self, tmp_path):
        cfg = tiny_config(tmp_path, center_frequencies=(5e6, 7e6), tx_focus_depths=(15e-3, 25e-3))
        paths = run_peak_fwhm_sweep(cfg)
        header, rows = read_csv(paths[0])
        assert tuple(header) == PEAK_FWHM_COLUMNS
        assert len(rows) == 2 * 2 * cfg.depth_grid.count
        box_header, box_rows = read_csv(paths[1])
        assert len(box_rows) == 4

    def test_matched_configuration_has_tiny_fwhm_difference(self, tmp_path, probe):
        cfg = tiny_config(tmp_path, depth_grid=DepthGrid(24.8e-3, 25.2e-3, 3))
        paths = run_peak_fwhm_sweep(cfg)
        _, rows = read_csv(paths[0])
        diffs = [float(r[10]) for r in rows]
        assert min(diffs) < 1.0 / probe.sampling_frequency

    def test_das_normalized_peak_is_one_at_focus(self, tmp_path):
        cfg = tiny_config(tmp_path, depth_grid=DepthGrid(24.99e-3, 25.01e-3, 3))
        paths = run_peak_fwhm_sweep(cfg)
        _, rows = read_csv(paths[0])
        norms = [float(r[6]) for r in rows]
        assert norms[1] == pytest.approx(1.0, rel=5e-3)


class TestErrorSweep:
    def test_outputs_and_diagonal(self, tmp_path):
        cfg = tiny_config(tmp_path, depth_grid=DepthGrid(20e-3, 30e-3, 6))
        paths = run_error_sweep(cfg)
        assert [p.name for p in paths] == [
            "theta_matrix.csv", "error_local.csv", "error_global.csv", "error_mask.csv",
        ]
        matrix = ThetaMatrix.load_csv(paths[0])
        assert matrix.values.shape == (6, 6)
        assert np.allclose(np.diag(matrix.values), 1.0, atol=1e-6)
        _, _, local = load_matrix_csv(paths[1])
        assert np.all(np.diag(local) < 1e-6)
        _, _, mask = load_matrix_csv(paths[3])
        assert np.all(np.diag(mask) == 1.0)

    def test_worker_invariance_bitwise(self, tmp_path):
        cfg1 = tiny_config(tmp_path / "w1", depth_grid=DepthGrid(22e-3, 28e-3, 4))
        cfg2 = tiny_config(tmp_path / "w2", depth_grid=DepthGrid(22e-3, 28e-3, 4),
                           parallel_workers=2)
        paths1 = run_error_sweep(cfg1)
        paths2 = run_error_sweep(cfg2)
        for a, b in zip(paths1, paths2):
            assert a.read_bytes() == b.read_bytes()

    def test_matches_theta_matrix_sweep_op(self, tmp_path, probe, tx_rule, rx_rule):
        from tidas.tidas import theta_matrix_sweep

        cfg = tiny_config(tmp_path, depth_grid=DepthGrid(22e-3, 28e-3, 4))
        paths = run_error_sweep(cfg)
        matrix = ThetaMatrix.load_csv(paths[0])
        ctx = build_focus_context(cfg, cfg.sweep_frequency, cfg.sweep_tx_focus)
        direct = theta_matrix_sweep(
            cfg.depth_grid.values, probe, tx_rule, rx_rule,
            tx_focus_depth=cfg.sweep_tx_focus,
            window_half_width=ctx.window_half_width,
        )
        assert np.allclose(matrix.values, direct.values, rtol=1e-8, atol=1e-12)


class TestLineExperiments:
    def test_table_shape_and_line_files(self, tmp_path):
        cfg = tiny_config(
            tmp_path,
            depth_grid=DepthGrid(5e-3, 42e-3, 150),
            reference_depths=(25e-3, 35e-3),
            scatterer_scenarios=("five_uniform", "five_ramp"),
        )
        paths = run_line_experiments(cfg)
        table_path = paths[-1]
        header, rows = read_csv(table_path)
        assert header == ["scenario", "reference_depth_m", "mean_das_sl_db",
                          "mean_tidas_sl_db", "relative_sl_error"]
        assert len(rows) == 4  # two scenarios x two reference depths
        line_files = sorted(p.name for p in paths[:-1])
        assert line_files == [
            "five_ramp_25mm.csv", "five_ramp_35mm.csv",
            "five_uniform_25mm.csv", "five_uniform_35mm.csv",
        ]
        _, line_rows = read_csv(paths[0])
        assert len(line_rows) == 150

    def test_six_row_table_with_all_scenarios(self, tmp_path):
        cfg = tiny_config(
            tmp_path,
            depth_grid=DepthGrid(5e-3, 42e-3, 120),
            reference_depths=(25e-3, 35e-3),
            scatterer_scenarios=("five_uniform", "five_ramp", "hundred_uniform"),
        )
        paths = run_line_experiments(cfg)
        _, rows = read_csv(paths[-1])
        assert len(rows) == 6


class TestBench:
    def test_five_rows_and_positive_medians(self, tmp_path):
        cfg = tiny_config(
            tmp_path,
            depth_grid=DepthGrid(5e-3, 42e-3, 40),
            scatterer_scenarios=("five_uniform", "five_ramp", "hundred_uniform"),
        )
        path = run_bench(cfg)
        header, rows = read_csv(path)
        assert header == ["experiment", "trials", "das_median_s", "tidas_median_s", "speedup"]
        assert len(rows) == 5
        for row in rows:
            assert float(row[2]) > 0 and float(row[3]) > 0
            assert int(row[1]) == 2

    def test_line_rows_show_large_speedup(self, tmp_path):
        cfg = tiny_config(
            tmp_path,
            depth_grid=DepthGrid(5e-3, 42e-3, 60),
            bench_trials=3,
            scatterer_scenarios=("five_uniform",),
        )
        path = run_bench(cfg)
        _, rows = read_csv(path)
        line_rows = [r for r in rows if r[0].startswith("line_")]
        assert all(float(r[4]) > 3.0 for r in line_rows)


class TestDeterminism:
    def test_repeated_runs_are_bit_identical(self, tmp_path):
        results = []
        for name in ("a", "b"):
            cfg = tiny_config(tmp_path / name, depth_grid=DepthGrid(5e-3, 42e-3, 41))
            paths = run_peak_fwhm_sweep(cfg) + run_error_sweep(cfg) + run_line_experiments(cfg)
            results.append({p.name: p.read_bytes() for p in paths})
        assert results[0] == results[1]
