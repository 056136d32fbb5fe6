"""``lure-pcac`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 sector-check
failure. ``LURE_PCAC_THREADS`` caps the number of analysis workers.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import lure, records, stability
from .config import ConfigError, load_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_SECTOR = 4

PROBES = 10_000
PROBE_RANGE = 20.0

log = logging.getLogger("lure_pcac")


def tool_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def worker_count():
    raw = os.environ.get("LURE_PCAC_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"LURE_PCAC_THREADS must be a positive integer, got {raw!r}")


def probe_grid(p, count=PROBES, bound=PROBE_RANGE):
    """About ``count`` points covering ``[-bound, bound]^p`` on a tensor grid."""
    per_axis = max(2, int(round(count ** (1.0 / p))))
    axis = np.linspace(-bound, bound, per_axis)
    mesh = np.meshgrid(*([axis] * p), indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def analyze(exp, traj, workers=1):
    """Stability reports for every stored snapshot, ordered by step."""
    plant_ss = stability.StateSpace(exp.sim.A, exp.sim.B, exp.sim.C)
    snaps = [traj.snapshots[k] for k in sorted(traj.snapshots)]

    def one(snap):
        return stability.analyze_snapshot(plant_ss, snap, exp.sector, exp.grid_size)

    if workers <= 1 or len(snaps) < 2:
        return [one(s) for s in snaps]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, snaps))


def sector_report(exp):
    """Return ``(ok, lines)`` for the sector and DMISB checks of ``exp``."""
    sim, sec = exp.sim, exp.sector
    Y = probe_grid(sim.p)
    ok, worst = stability.sector_check(sim.nonlinearity, sec.K1, sec.K2, Y)
    lines = [f"nonlinearity: {sim.nonlinearity}",
             f"probes: {Y.shape[0]} points on [-{PROBE_RANGE:g}, {PROBE_RANGE:g}]^{sim.p}",
             f"sector [K1, K2]: {'pass' if ok else 'FAIL'} "
             f"(max of [g-K1 y]^T[g-K2 y] = {worst:.3e}, tolerance {stability.SECTOR_TOL:g})"]
    if sim.m == sim.p:
        shifted = sim.nonlinearity.shifted(sec.K_L)
        axis = np.linspace(-PROBE_RANGE, PROBE_RANGE, PROBES)
        dm = stability.dmisb_check(shifted, sec.kappa, axis)
        lines.append(f"shifted by K_L = {sec.K_L:g}: monotone and in [0, kappa]: "
                     f"{'pass' if dm else 'FAIL'}")
        ok = ok and dm
    return ok, lines


def _meta(exp, mode, args, extra):
    sec = exp.sector
    return {
        "tool": {"name": "lure-pcac", "version": tool_version()},
        "run": {"mode": mode, "source": args.preset or args.config,
                "overrides": list(args.set or []), **extra},
        "thresholds": {"zeta1_tol": stability.ZETA1_TOL,
                       "sector_tol": stability.SECTOR_TOL,
                       "divergence_bound": lure.DIVERGENCE_BOUND,
                       "grid_size": exp.grid_size,
                       "grid_interval": "[0, pi] inclusive",
                       "checkpoint_count": len(exp.checkpoints)},
        "resolved": {"kappa": sec.kappa.tolist(), "N": sec.N.tolist(),
                     "f_threshold": exp.sim.rls.f_threshold()},
        "notes": _notes(exp),
        "": exp.params,
    }


def _notes(exp):
    notes = {"k_engage": "engagement step is a free choice; "
                         f"this run used {exp.sim.k_engage}",
             "pass_flags": "cc_pass and tc_pass are recomputed from the stored scalars"}
    text = str(exp.sim.nonlinearity)
    if "gaussian_plus_piecewise" in text:
        notes["branch_slopes"] = f"outer branch slopes (s_l, s_h) chosen freely: {text}"
    return notes


def run(args):
    """Execute one subcommand; returns the exit status."""
    try:
        exp = load_experiment(args.preset or args.config, args.set)
        workers = worker_count()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = args.command

    if mode == "sector-check":
        ok, lines = sector_report(exp)
        print("\n".join(lines))
        records.write_meta(out / "run.meta", _meta(exp, mode, args, {"sector_ok": ok}))
        return EXIT_OK if ok else EXIT_SECTOR

    cps = exp.checkpoints if mode == "analyze" else ()
    traj = lure.simulate(exp.sim, checkpoints=cps)
    records.write_trajectory(out / "trajectory.csv", traj)
    extra = {"rows": len(traj), "diverged": traj.diverged}
    if traj.diverged:
        extra["divergence_step"] = traj.divergence_step
    if mode == "analyze":
        reports = analyze(exp, traj, workers)
        records.write_stability(out / "stability.csv", reports)
        extra["approximate_rows"] = [r.k for r in reports if r.approximate]
        if reports:
            last = reports[-1]
            print(f"k={last.k}: cc_pass={last.cc_pass} tc_pass={last.tc_pass}")
    records.write_meta(out / "run.meta", _meta(exp, mode, args, extra))
    if traj.diverged:
        print(f"diverged at k={traj.divergence_step}; partial files kept in {out}",
              file=sys.stderr)
        return EXIT_DIVERGED
    print(f"wrote {len(traj)} rows to {out / 'trajectory.csv'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lure-pcac",
        description="Adaptive control of discrete-time Lur'e systems with "
                    "per-step absolute-stability certificates.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("simulate", "run the closed loop and write trajectory.csv"),
                            ("analyze", "simulate, then write stability.csv"),
                            ("sector-check", "check the nonlinearity against its sector")):
        p = sub.add_parser(name, help=help_text)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--preset", help="ex1, ex1p, ex2, ex3 or ex4")
        src.add_argument("--config", help="dotted-key configuration file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key; repeatable")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
