"""``bandkrotov`` command line: optimize, propagate, spectrum, check.

Exit codes: 0 success/converged, 1 unexpected error, 2 stopped without
reaching the yield target, 3 non-monotone run, 64 invalid config,
65 malformed data file, 66 missing file.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, describe, load_config, to_jsonable
from .core import AU_TIME_FS, ControlField, gate_yield
from .io import (DataError, grid_from_times, read_fields, write_columns, write_fields,
                 write_json, write_masks, write_spectra, write_trace)
from .krotov import Termination, iterate
from .propagation import PropagationError, propagate
from .spectral import out_of_band_fraction

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_NON_MONOTONE = 3
EXIT_CONFIG = 64
EXIT_DATA = 65
EXIT_MISSING = 66

log = logging.getLogger("bandkrotov")


def _load(args) -> RunConfig:
    return load_config(args.config, profile=args.profile, output_dir=args.output_dir,
                       threads=args.threads, seed=args.seed)


def _exit_for(reason: Termination) -> int:
    if reason is Termination.YIELD_TARGET:
        return EXIT_OK
    if reason is Termination.NON_MONOTONE:
        return EXIT_NON_MONOTONE
    return EXIT_NOT_CONVERGED


def cmd_optimize(args) -> int:
    cfg = _load(args)
    prob = cfg.build()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    every = cfg.checkpoint_interval

    def checkpoint(rec, fields):
        if every > 0 and rec.iter > 0 and rec.iter % every == 0:
            write_fields(out / "checkpoints" / f"fields_{rec.iter:05d}.csv", prob.grid, fields)

    t0 = time.perf_counter()
    res = iterate(prob.system, prob.targets, prob.guess, prob.grid, prob.krotov, callback=checkpoint)
    wall = time.perf_counter() - t0
    write_trace(out / "trace.csv", res.records)
    write_fields(out / "fields.csv", prob.grid, res.final_fields)
    write_spectra(out / "spectra.csv", prob.grid, res.final_fields)
    write_masks(out / "masks.csv", prob.filters)
    last = res.records[-1]
    manifest = {
        "package_version": __version__,
        "config_hash": cfg.hash(),
        "config": to_jsonable(cfg.resolved()),
        "profile": cfg.profile,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "iterations": last.iter,
        "termination_reason": res.termination_reason.value,
        "converged": res.converged,
        "final_yield_sum_sq": last.yield_sum_sq,
        "final_avg_fidelity": last.avg_fidelity,
        "final_phase_fidelity": last.phase_fidelity,
        "yields": [r.yield_sum_sq for r in res.records],
        "outputs": ["trace.csv", "fields.csv", "spectra.csv", "masks.csv"],
    }
    write_json(out / "manifest.json", manifest)
    print(f"{res.termination_reason.value}: {last.iter} iterations, avg_fidelity "
          f"{last.avg_fidelity:.8f}, phase_fidelity {last.phase_fidelity:.8f} ({wall:.1f} s)")
    print(f"outputs in {out}")
    return _exit_for(res.termination_reason)


def cmd_propagate(args) -> int:
    cfg = _load(args)
    prob = cfg.build()
    _, samples = read_fields(args.fields, prob.grid)
    nf = prob.system.kind.n_fields
    if len(samples) != nf:
        raise DataError(f"{args.fields}: expected {nf} field column(s), found {len(samples)}")
    fields = [ControlField(s, g.carrier_cm, g.id) for s, g in zip(samples, prob.guess)]
    traj = propagate(prob.system, fields, prob.targets.initial, prob.grid,
                     prob.krotov.propagator, stride=cfg.record_stride)
    rep = gate_yield(traj.final, prob.targets, norm_tol=1e-6)
    if prob.basis is not None:
        watch = list(zip(prob.basis.names, prob.basis.indices))
    else:
        watch = [(str(i), i) for i in range(prob.system.dimension)]
    cols = {"t_fs": traj.times * AU_TIME_FS}
    pops = np.abs(traj.states) ** 2
    for k, name in enumerate(prob.targets.names):
        for label, idx in watch:
            cols[f"p_{name}_{label}"] = pops[:, idx, k]
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_columns(out / "populations.csv", cols)
    oob = [out_of_band_fraction(f, flt) if np.any(f.samples) and not flt.is_all_pass else 0.0
           for f, flt in zip(fields, prob.filters)]
    summary = {
        "fields": str(args.fields),
        "yield_sum_sq": rep.sum_sq,
        "avg_fidelity": rep.avg_fidelity,
        "phase_fidelity": rep.phase_fidelity,
        "out_of_band_fraction": oob,
        "config_hash": cfg.hash(),
    }
    write_json(out / "propagate.json", summary)
    print(f"yield_sum_sq {rep.sum_sq:.12f}  avg_fidelity {rep.avg_fidelity:.12f}  "
          f"phase_fidelity {rep.phase_fidelity:.12f}")
    print("out_of_band " + " ".join(f"{x:.6e}" for x in oob))
    return EXIT_OK


def cmd_spectrum(args) -> int:
    t, samples = read_fields(args.fields)
    grid = grid_from_times(t)
    fields = [ControlField(s, 0.0, i) for i, s in enumerate(samples, start=1)]
    out = Path(args.output_dir) if args.output_dir else Path(args.fields).parent
    path = write_spectra(out / "spectra.csv", grid, fields)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _load(args)
    prob = cfg.build()
    print(f"profile     {cfg.profile or '-'}")
    print(describe(prob))
    print("config OK")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=None)
    common.add_argument("--profile", choices=("full", "desk", "ci"), default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bandkrotov", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    o = sub.add_parser("optimize", parents=[common], help="run the constrained optimization")
    o.add_argument("--config", required=True)
    o.set_defaults(func=cmd_optimize)
    r = sub.add_parser("propagate", parents=[common], help="replay stored fields")
    r.add_argument("--config", required=True)
    r.add_argument("--fields", required=True)
    r.set_defaults(func=cmd_propagate)
    s = sub.add_parser("spectrum", parents=[common], help="power spectra of a field CSV")
    s.add_argument("--fields", required=True)
    s.set_defaults(func=cmd_spectrum)
    c = sub.add_parser("check", parents=[common], help="validate a config and print the grid")
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PropagationError as exc:
        print(f"propagation error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
