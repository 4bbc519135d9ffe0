"""Command-line entry point ``psrt``.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .bench import EquivalenceError, bench_normal_ops, parse_sizes
from .config import ConfigError, float_list, load_grid_config, load_simulation_config
from .container import (
    ContainerError,
    dataset_from_container,
    dataset_to_container,
    image_from_container,
    read_container,
    write_container,
)
from .export import FORMATS, export_frames
from .metrics import append_metrics_csv
from .pipeline import PipelineConfig, PipelineError, run_recon
from .solvers import ALGORITHMS, NumericalError, ReconConfig
from .subspace import model_order_curve
from .sweep import sweep, write_sweep_csv

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_NUMERICAL"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("psrt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


def _sigmas(s):
    try:
        vals = float_list(s)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad sigma list {s!r}: {exc}") from exc
    if any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("noise variances must be non-negative")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="psrt", description="Partial separable dynamic reconstruction toolkit.")
    p.add_argument("--version", action="version", version=f"psrt {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate an interleaved acquisition")
    s.add_argument("--config", required=True, help="key = value simulation config")
    s.add_argument("--out", required=True, help="output .psrc container")

    r = sub.add_parser("recon", help="reconstruct a dataset container")
    r.add_argument("--algo", required=True, choices=ALGORITHMS)
    r.add_argument("--lambda", dest="lam", type=float, default=0.0)
    r.add_argument("--L", type=_positive_int, default=20)
    r.add_argument("--iters", type=_positive_int, default=50)
    r.add_argument("--tol", type=float, default=1e-6)
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--ref", help="container whose 'image' or 'truth' is the reference")
    r.add_argument("--metrics", help="CSV to append a metrics row to")
    r.add_argument("--report", help="CSV for the per-iteration solve report")
    r.add_argument("--coils-out", type=_positive_int, default=6)
    r.add_argument("--sens", choices=("estimate", "provided"), default="estimate",
                   help="estimate maps from data or use maps stored in the input")
    r.add_argument("--seed", type=int, default=0)

    m = sub.add_parser("model-order", help="predicted error versus model order")
    m.add_argument("--input", required=True, help="dataset container with 'truth'")
    m.add_argument("--l-min", type=_positive_int, required=True)
    m.add_argument("--l-max", type=_positive_int, required=True)
    m.add_argument("--sigmas", type=_sigmas, required=True, help="comma-separated noise variances")
    m.add_argument("--out", required=True)

    w = sub.add_parser("sweep", help="lambda x Nkspc x algorithm grid")
    w.add_argument("--grid", required=True)
    w.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="time the normal-operator variants")
    b.add_argument("--sizes", required=True, help="NXxNY:T:L:J[;...]")
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--out", required=True)

    e = sub.add_parser("export", help="write frames and an M-mode image")
    e.add_argument("--input", required=True)
    e.add_argument("--dir", required=True)
    e.add_argument("--format", required=True, choices=FORMATS)
    e.add_argument("--mmode-col", type=_nonneg_int)
    return p


def _cmd_simulate(args):
    cfg = load_simulation_config(args.config)
    ds = cfg.run()
    c = dataset_to_container(ds)
    c.metadata.update({"nx": str(ds.shape[0]), "ny": str(ds.shape[1])})
    write_container(args.out, c.arrays, c.metadata)
    log.info("wrote %s: kspace %s, %d navigators", args.out, ds.kspace.shape, ds.nav.n_nav)


def _cmd_recon(args):
    rc = ReconConfig(algorithm=args.algo, lam=args.lam, L=args.L, max_iters=args.iters, tol=args.tol, seed=args.seed)
    ds = dataset_from_container(read_container(args.input))
    ref = None
    if args.ref:
        ref, _ = image_from_container(read_container(args.ref))
    if args.metrics and ref is None and ds.truth is None:
        raise ValueError("--metrics needs a reference: pass --ref or use an input holding 'truth'")
    cfg = PipelineConfig(recon=rc, coils_out=args.coils_out, reference=args.ref, sens_source=args.sens,
                         compute_metrics=bool(args.metrics))
    res = run_recon(ds, cfg, reference=ref)
    nx, ny = ds.shape
    meta = {
        "kind": "recon",
        "nx": str(nx),
        "ny": str(ny),
        "algorithm": rc.algorithm,
        "lambda": repr(rc.lam),
        "L": str(rc.L),
        "iterations": str(res.report.iterations),
        "scale": repr(res.scale),
    }
    write_container(args.out, {"image": res.image, "U": res.U, "V": res.V, "sens": res.sens}, meta)
    if args.metrics:
        append_metrics_csv(args.metrics, [res.metrics])
    if args.report:
        res.report.to_csv(args.report)
    log.info("%s: %d iterations, residual %.3e", rc.algorithm, res.report.iterations, res.report.final_residual)


def _cmd_model_order(args):
    if args.l_min > args.l_max:
        raise UsageError(f"--l-min {args.l_min} exceeds --l-max {args.l_max}")
    ds = dataset_from_container(read_container(args.input))
    if ds.truth is None:
        raise ValueError("model-order needs a dataset holding the ground truth image")
    curve = model_order_curve(ds.truth, ds.nav, args.sigmas, range(args.l_min, args.l_max + 1))
    curve.to_csv(args.out)


def _cmd_sweep(args):
    rows = sweep(load_grid_config(args.grid))
    write_sweep_csv(args.out, rows)
    failed = sum(r.status != "ok" for r in rows)
    log.info("sweep: %d cells, %d failed", len(rows), failed)


def _cmd_bench(args):
    if args.reps < 5:
        raise UsageError(f"--reps must be at least 5, got {args.reps}")
    report = bench_normal_ops(parse_sizes(args.sizes), reps=args.reps)
    report.to_csv(args.out)


def _cmd_export(args):
    img, shape = image_from_container(read_container(args.input))
    files = export_frames(img, shape, args.dir, args.format, mmode_col=args.mmode_col)
    log.info("wrote %d files to %s", len(files), args.dir)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "recon": _cmd_recon,
    "model-order": _cmd_model_order,
    "sweep": _cmd_sweep,
    "bench": _cmd_bench,
    "export": _cmd_export,
}


def _is_numerical(exc: BaseException) -> bool:
    while exc is not None:
        if isinstance(exc, (NumericalError, EquivalenceError, FloatingPointError, np.linalg.LinAlgError)):
            return True
        exc = exc.__cause__
    return False


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"psrt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PipelineError, NumericalError, EquivalenceError, ContainerError, ConfigError,
            ValueError, OSError, KeyError) as exc:
        code = EXIT_NUMERICAL if _is_numerical(exc) else EXIT_DATA
        print(f"psrt {args.command}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
