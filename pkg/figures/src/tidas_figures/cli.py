"""Command line driver: one figure per kind, or everything from a results directory."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .io import SchemaError
from .render import FIGURE_KINDS, FigureSpec, render

# results-directory layout consumed by `all`
STANDARD_INPUTS = (
    ("peak_fwhm", "peak_fwhm.csv", "peak_fwhm.svg"),
    ("fwhm_box", "peak_fwhm_box.csv", "fwhm_box.svg"),
    ("theta_heatmap", "theta_matrix.csv", "theta_heatmap.svg"),
    ("error_map", "error_local.csv", "error_map_local.svg"),
    ("error_map", "error_global.csv", "error_map_global.svg"),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tidas-figures",
        description="Render figures from tidas experiment CSV artifacts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in FIGURE_KINDS:
        cmd = sub.add_parser(kind, help=f"render one {kind} figure")
        cmd.add_argument("input_csv", type=Path)
        cmd.add_argument("-o", "--output", type=Path, required=True)
    alls = sub.add_parser("all", help="render every figure kind from a results directory")
    alls.add_argument("results_dir", type=Path)
    alls.add_argument("-o", "--figures-dir", type=Path, default=None)
    return parser


def render_all(results_dir: Path, figures_dir: Path) -> list:
    outputs = []
    for kind, input_name, output_name in STANDARD_INPUTS:
        source = results_dir / input_name
        if not source.exists():
            raise SchemaError(f"missing expected artifact {source}")
        outputs.append(render(FigureSpec(source, kind, figures_dir / output_name)))
    lines_dir = results_dir / "lines"
    line_files = sorted(lines_dir.glob("*.csv")) if lines_dir.is_dir() else []
    if not line_files:
        raise SchemaError(f"no line reconstructions under {lines_dir}")
    for source in line_files:
        outputs.append(
            render(FigureSpec(source, "line_overlay", figures_dir / f"line_{source.stem}.svg"))
        )
    return outputs


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "all":
            figures_dir = args.figures_dir or args.results_dir / "figures"
            for path in render_all(args.results_dir, figures_dir):
                print(path)
        else:
            print(render(FigureSpec(args.input_csv, args.command, args.output)))
    except SchemaError as exc:
        print(f"tidas-figures: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"tidas-figures: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
