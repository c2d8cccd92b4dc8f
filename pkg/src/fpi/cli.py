"""``fpi`` command line driver.

    fpi <simulate|spectrum|absorb|stabilize|dimension|certify> --config PATH [--out DIR] [--seed N]

Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 certification
failure.  ``FPI_THREADS`` caps BLAS threads and the ensemble worker pool.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time
import traceback

import numpy as np

from . import acceptance
from .attractor import absorbing_set_check, dimension_probe, stabilizability_check
from .grid import build_grid
from .io import ConfigError, Experiment, OutputDir, emit_plot_data, parse_config, to_jsonable, write_snapshot
from .linalg import ConvergenceError
from .spectral import (
    DimensionError, assemble_generator, check_accretivity, semigroup_norm, spectrum,
)
from .stepper import SolverError, decay_rate_fit, run

SUBCOMMANDS = ("simulate", "spectrum", "absorb", "stabilize", "dimension", "certify")
EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_CERTIFY = 0, 1, 2, 3


class CertificationFailure(Exception):
    pass


def _simulate(exp: Experiment, out: OutputDir) -> dict:
    snaps, led = run(exp.run)
    fit = decay_rate_fit(led)
    emit_plot_data(out, "ledger", led)
    emit_plot_data(out, "decay", (led, fit))
    write_snapshot(out, "snapshots/initial", snaps[0])
    write_snapshot(out, "snapshots/final", snaps[-1])
    e = led.total
    report = {"steps": len(led.rows) - 1, "E0": e[0], "E_final": e[-1], "max_residual": led.max_residual,
              "relative_residual": led.max_residual / e[0] if e[0] > 0 else 0.0, "decay_fit": fit}
    out.write_json("report.json", report)
    return report


def _spectrum(exp: Experiment, out: OutputDir) -> dict:
    M = assemble_generator(build_grid(exp.run.grid))
    ev = spectrum(M)
    emit_plot_data(out, "spectrum", ev)
    acc = check_accretivity(M, seed=exp.analysis.seed)
    report = {"dimension": M.dim, "abscissa": float(ev[0].real), "stable": bool(ev[0].real < 0),
              "semigroup_norm_t1": semigroup_norm(M, 1.0), "condition_number": float(np.linalg.cond(M.matrix)),
              "accretivity": {"identity_error": acc.max_identity_error,
                              "min_symmetric_eigenvalue": acc.min_symmetric_eigenvalue,
                              "accretive": acc.accretive}}
    out.write_json("spectrum.json", report)
    return report


def _absorb(exp: Experiment, out: OutputDir) -> dict:
    a = exp.analysis
    rep = absorbing_set_check(exp.run, n=a.ensemble, r_max=a.r_max, restart_T=a.restart_T, seed=a.seed)
    t = rep.ledgers[0].t
    cols = [led.column("W_lyap") for led in rep.ledgers]
    out.write_csv("absorb_W.csv", ["t"] + [f"W_{k}" for k in range(len(cols))], zip(t, *cols))
    out.write_json("absorb.json", {**to_jsonable(rep), "passed": rep.passed})
    if not rep.passed:
        raise CertificationFailure(f"absorbing-set check failed; escaping trajectories {rep.escapes}")
    return {"passed": True, "ball_radius": rep.ball_radius}


def _stabilize(exp: Experiment, out: OutputDir) -> dict:
    a = exp.analysis
    rep = stabilizability_check(exp.run, n=a.pairs, r_max=a.pair_r_max, seed=a.seed)
    out.write_csv("stabilize_margins.csv", ("pair", "margin", "worst_time", "calibration"),
                  ((k, float(m), float(w), int(c)) for k, (m, w, c) in
                   enumerate(zip(rep.margins, rep.worst_time, rep.calibration))))
    out.write_json("stabilize.json", {**to_jsonable(rep), "passed": rep.passed})
    if not rep.passed:
        bad = np.nonzero(rep.margins < 0)[0].tolist()
        raise CertificationFailure(f"stabilizability estimate violated for pairs {bad}")
    return {"passed": True, "min_margin": float(rep.margins.min())}


def _dimension(exp: Experiment, out: OutputDir) -> dict:
    a = exp.analysis
    est = dimension_probe(exp.run, n_samples=a.dim_samples, window=a.dim_window, transient=a.transient)
    if not est.degenerate:
        emit_plot_data(out, "scaling", est)
    out.write_json("dimension.json", est)
    return {"dimension": est.dimension, "band": est.band, "label": est.label}


def _certify(exp: Experiment, out: OutputDir) -> dict:
    if exp.run.grid.dimensions != 2:
        raise ValueError("certify runs on a 2D grid; set grid.dimensions to 2")
    results = acceptance.certify(exp.run.grid)
    for r in results:
        print(r.line())
    out.write_json("certify.json", [{**to_jsonable(r), "passed": r.passed} for r in results])
    failed = [r.number for r in results if not r.passed]
    if failed:
        raise CertificationFailure(f"criteria failed: {failed}")
    return {"passed": True, "criteria": [r.number for r in results]}


HANDLERS = {"simulate": _simulate, "spectrum": _spectrum, "absorb": _absorb,
            "stabilize": _stabilize, "dimension": _dimension, "certify": _certify}


def _seed(text: str) -> int:
    n = int(text)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpi", description="Fluid-plate interaction simulator and analyzer.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", default=None, help="output directory (default ./fpi-<subcommand>)")
    p.add_argument("--seed", type=_seed, default=None, help="overrides every seed in the configuration")
    return p


def _limit_threads():
    """BLAS thread cap from ``FPI_THREADS`` (needs the optional threadpoolctl)."""
    n = os.environ.get("FPI_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=max(1, int(n)))


def run_experiment(subcommand: str, exp: Experiment, out_dir: str, seed: int) -> int:
    """Dispatch one subcommand, write the manifest and return the exit status."""
    out = OutputDir(out_dir)
    t0 = time.perf_counter()
    status, failure = EXIT_OK, None
    try:
        summary = HANDLERS[subcommand](exp, out)
    except CertificationFailure as exc:
        status, failure = EXIT_CERTIFY, {"kind": "certification", "message": str(exc)}
    # LinAlgError subclasses ValueError, so solver failures are caught first
    except (SolverError, ConvergenceError, np.linalg.LinAlgError, ArithmeticError) as exc:
        status, failure = EXIT_SOLVER, {"kind": "solver", "message": str(exc),
                                        "trace": traceback.format_exc(limit=3)}
    except (DimensionError, ConfigError, ValueError) as exc:
        status, failure = EXIT_INVALID, {"kind": "validation", "message": str(exc)}
    if failure is not None:
        out.write_json("failure.json", failure)
        print(json.dumps(failure), file=sys.stderr)
    else:
        print(json.dumps(to_jsonable(summary), sort_keys=True))
    out.write_manifest(exp, subcommand, seed, {"wall_seconds": time.perf_counter() - t0, "exit_status": status})
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        exp = parse_config(args.config)
    except ConfigError as exc:
        print(json.dumps({"kind": "validation", "field": exc.field, "line": exc.line, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_INVALID
    seed = exp.analysis.seed if args.seed is None else args.seed
    if args.seed is not None:
        exp = exp.with_seed(args.seed)
    with _limit_threads():
        return run_experiment(args.subcommand, exp, args.out or f"fpi-{args.subcommand}", seed)


if __name__ == "__main__":
    sys.exit(main())
