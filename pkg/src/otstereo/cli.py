"""Command-line tool around the scanline transport pipeline.

Four subcommands cover the full loop: `generate` renders a synthetic
stereo pair with ground truth, `disparity` solves a pair into a
disparity map plus occlusion and convergence reports, `reconstruct`
lifts a disparity grid to a point cloud, and `diagnose` records the
per-iteration behaviour of a single scanline.

All outputs are deterministic for a fixed input and configuration:
scanlines are solved in a fixed order (worker pools only change the
schedule, not the merge order) and no timestamps are written.

Exit codes: 0 on success, 1 for input or configuration errors, 2 for
numerical failures such as an unresolved occlusion or a plain-domain
kernel underflow.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .disparity import DisparityMap, disparity_map, disparity_profile
from .errors import (
    NumericalUnderflowError,
    OtStereoError,
    UnresolvedOcclusionError,
)
from .kernel import build_kernel
from .measures import DEFAULT_BALANCE_TOLERANCE, measure_from_row
from .scene import CameraRig, load_scene, map_from_values, reconstruct, render_pair
from .sinkhorn import SinkhornConfig, iteration_trace, sinkhorn

STOP_FIXED_COUNT = "fixed-count"
STOP_TOLERANCE = "tolerance"


@dataclass(frozen=True)
class RunConfig:
    """Pipeline configuration shared by the solving subcommands.

    stop picks between running exactly niter iterations and stopping
    once both scaling oscillations fall under stop_tolerance. Every
    field can be set in a key=value config file; command-line flags
    override file values.
    """

    epsilon: float = 0.1
    niter: int = 100000
    log_domain: bool = True
    balance_tolerance: float = DEFAULT_BALANCE_TOLERANCE
    mass_tolerance: float = 1e-3
    stop: str = STOP_TOLERANCE
    stop_tolerance: float = 1e-9
    workers: int = 1
    out_dir: str = "."

    def __post_init__(self):
        if self.stop not in (STOP_FIXED_COUNT, STOP_TOLERANCE):
            raise ValueError(f"unknown stop mode {self.stop!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        self.sinkhorn_config()

    def sinkhorn_config(self) -> SinkhornConfig:
        tolerance = 0.0 if self.stop == STOP_FIXED_COUNT else self.stop_tolerance
        return SinkhornConfig(
            epsilon=self.epsilon,
            max_iterations=self.niter,
            stop_tolerance=tolerance,
            log_domain=self.log_domain,
        )


_BOOL_TOKENS = {"1": True, "true": True, "on": True, "yes": True,
                "0": False, "false": False, "off": False, "no": False}


def _parse_bool(raw: str) -> bool:
    try:
        return _BOOL_TOKENS[raw.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {raw!r}")


_CONFIG_PARSERS = {
    "epsilon": float,
    "niter": int,
    "log_domain": _parse_bool,
    "balance_tolerance": float,
    "mass_tolerance": float,
    "stop": str.strip,
    "stop_tolerance": float,
    "workers": int,
    "out_dir": str.strip,
}


def parse_run_config(text: str) -> dict:
    """Parse flat key=value lines into RunConfig keyword arguments."""
    fields = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or key not in _CONFIG_PARSERS:
            raise ValueError(f"config line {line_no}: unknown entry {line!r}")
        try:
            fields[key] = _CONFIG_PARSERS[key](raw.strip())
        except ValueError as exc:
            raise ValueError(f"config line {line_no}: {exc}")
    return fields


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Layer defaults, then the config file, then explicit flags."""
    fields = {}
    if getattr(args, "config", None):
        fields.update(parse_run_config(Path(args.config).read_text()))
    for name in _CONFIG_PARSERS:
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    return RunConfig(**fields)


def _report_payload(report) -> dict:
    return {
        "y": report.y,
        "phi": report.phi,
        "intervals": [[int(lo), int(hi)] for lo, hi in report.intervals],
        "object_shifts": [
            [int(col), float(shift)] for col, shift in report.object_shifts
        ],
        "compression_plateau": report.compression_plateau,
    }


def _clean(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def cmd_generate(args) -> int:
    scene, rig = load_scene(args.scene)
    pair = render_pair(scene, rig)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_pgm(out / "left.pgm", pair.left)
    fileio.write_pgm(out / "right.pgm", pair.right)
    fileio.write_csv(out / "truth_disparity.csv", pair.truth.values)
    fileio.write_json(
        out / "occlusions.json",
        {
            "non_occluded": pair.non_occluded,
            "scanlines": [
                {
                    "y": y,
                    "right_frame": [[int(a), int(b)] for a, b in rows["right_frame"]],
                    "left_frame": [[int(a), int(b)] for a, b in rows["left_frame"]],
                }
                for y, rows in sorted(pair.hidden.items())
            ],
        },
    )
    return 0


def _write_map(out: Path, result: DisparityMap) -> None:
    fileio.write_csv(out / "disparity.csv", result.values)
    fileio.write_disparity_pgm(out / "disparity.pgm", result.values)
    fileio.write_json(
        out / "occlusion_report.json",
        {"scanlines": [_report_payload(r) for r in result.reports]},
    )
    fileio.write_json(
        out / "diagnostics.json",
        {
            "scanlines": [
                {key: _clean(value) for key, value in info.items()}
                for info in result.diagnostics
            ]
        },
    )


def cmd_disparity(args) -> int:
    config = resolve_config(args)
    left = fileio.read_pgm(args.left)
    right = fileio.read_pgm(args.right)
    result = disparity_map(
        left,
        right,
        config.sinkhorn_config(),
        balance_tolerance=config.balance_tolerance,
        mass_tolerance=config.mass_tolerance,
        workers=config.workers,
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_map(out, result)
    failed = [info["y"] for info in result.diagnostics if info["path"] == "failed"]
    if failed:
        # outputs are still written; the exit code flags the rows
        # that could not be resolved
        print(
            f"otstereo: numerical failure on scanlines {failed}", file=sys.stderr
        )
        return 2
    return 0


def cmd_reconstruct(args) -> int:
    rig = CameraRig(baseline=args.baseline, focal=args.focal, beta=args.beta)
    values = fileio.read_csv(args.disparity)
    image = fileio.read_pgm(args.image)
    if values.size == 0:
        fileio.write_ply(args.out, np.empty((0, 4)))
        return 0
    if values.shape != image.shape:
        raise ValueError(
            f"disparity grid {values.shape} does not match image {image.shape}"
        )
    cloud = reconstruct(map_from_values(values), rig, image)
    fileio.write_ply(args.out, cloud.points)
    return 0


def cmd_diagnose(args) -> int:
    config = resolve_config(args)
    left = fileio.read_pgm(args.left)
    right = fileio.read_pgm(args.right)
    if left.shape != right.shape:
        raise ValueError(f"image shapes {left.shape} and {right.shape} differ")
    if not 0 <= args.y < left.shape[0]:
        raise ValueError(f"scanline {args.y} outside image of height {left.shape[0]}")
    nu0 = measure_from_row(right[args.y], require_mass=True)
    nu1 = measure_from_row(left[args.y], require_mass=True)
    sk = config.sinkhorn_config()
    with warnings.catch_warnings():
        if sk.log_domain:
            warnings.simplefilter("ignore", RuntimeWarning)
        kernel = build_kernel(left.shape[1], sk.epsilon)

    # the reference is this very run's endpoint, so the series shows
    # the distance still to travel at each iteration
    plan, vectors, report = sinkhorn(nu0.values, nu1.values, kernel, sk)
    reference = disparity_profile(plan).values
    records, final_plan = iteration_trace(
        nu0.values, nu1.values, kernel, sk,
        reference_vectors=vectors, reference_profile=reference,
    )

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "diagnose_series.csv", "w", encoding="ascii") as handle:
        handle.write("iteration,hilbert_u_step,hilbert_v_step,u_error,profile_error\n")
        for rec in records:
            cells = (
                rec.hilbert_u_step, rec.hilbert_v_step, rec.u_error, rec.profile_error
            )
            handle.write(str(rec.iteration))
            handle.write(
                "".join("," + ("NaN" if not np.isfinite(v) else f"{v:.9g}") for v in cells)
            )
            handle.write("\n")
    fileio.write_csv(out / "diagnose_plan.csv", final_plan.entries)
    fileio.write_json(
        out / "diagnose.json",
        {
            "y": args.y,
            "epsilon": sk.epsilon,
            "lam": kernel.lam,
            "iterations": report.iterations,
            "stop_reason": report.stop_reason,
            "marginal_violation": report.marginal_violation,
            "source_mass": nu0.mass,
            "target_mass": nu1.mass,
            # the trace's plan is the odd limit, whose mass is the
            # source's; the even limit carries the target's mass
            "mass_gap": float(final_plan.mass - nu1.mass),
        },
    )
    return 0


class _Parser(argparse.ArgumentParser):
    """argparse flavor whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"{self.prog}: error: {message}")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value file with RunConfig fields")
    parser.add_argument("--epsilon", type=float, help="entropic regularization")
    parser.add_argument("--niter", type=int, help="iteration budget per scanline")
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "--log-domain", dest="log_domain", action="store_const", const=True,
        help="iterate on log scalings (default)",
    )
    group.add_argument(
        "--plain", dest="log_domain", action="store_const", const=False,
        help="iterate on raw scalings",
    )
    parser.add_argument(
        "--balance-tolerance", dest="balance_tolerance", type=float,
        help="relative mass gap treated as balanced",
    )
    parser.add_argument(
        "--mass-tolerance", dest="mass_tolerance", type=float,
        help="absolute mass left unexplained by occlusion recovery",
    )
    parser.add_argument(
        "--stop", choices=(STOP_FIXED_COUNT, STOP_TOLERANCE),
        help="run exactly niter iterations, or stop at stop-tolerance",
    )
    parser.add_argument(
        "--stop-tolerance", dest="stop_tolerance", type=float,
        help="oscillation threshold for --stop tolerance",
    )
    parser.add_argument("--workers", type=int, help="scanline worker threads")
    parser.add_argument("--out-dir", dest="out_dir", help="output directory")
    parser.set_defaults(log_domain=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otstereo", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("generate", help="render a scene into a stereo pair")
    gen.add_argument("scene", help="scene description file")
    gen.add_argument("--out-dir", dest="out_dir", default=".")
    gen.set_defaults(run=cmd_generate)

    disp = commands.add_parser("disparity", help="solve a stereo pair")
    disp.add_argument("left", help="left PGM image")
    disp.add_argument("right", help="right PGM image")
    _add_config_flags(disp)
    disp.set_defaults(run=cmd_disparity)

    rec = commands.add_parser("reconstruct", help="lift disparity to a point cloud")
    rec.add_argument("disparity", help="disparity CSV")
    rec.add_argument("image", help="right PGM image supplying intensities")
    rec.add_argument("--out", default="cloud.ply", help="output PLY path")
    rec.add_argument("--baseline", type=float, default=10.0)
    rec.add_argument("--focal", type=float, default=1000.0)
    rec.add_argument("--beta", type=float, default=2.0)
    rec.set_defaults(run=cmd_reconstruct)

    diag = commands.add_parser("diagnose", help="trace one scanline's iterations")
    diag.add_argument("left", help="left PGM image")
    diag.add_argument("right", help="right PGM image")
    diag.add_argument("--y", type=int, required=True, help="scanline to trace")
    _add_config_flags(diag)
    diag.set_defaults(run=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except (NumericalUnderflowError, UnresolvedOcclusionError) as exc:
        print(f"otstereo: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (OtStereoError, OSError, ValueError) as exc:
        print(f"otstereo: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
