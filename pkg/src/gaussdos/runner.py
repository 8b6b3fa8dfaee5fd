"""Experiment orchestration: turn a validated config into result files.

One run writes its data files plus a manifest carrying the fully resolved
config, the tool version, the master seed, wall time and failure counts,
so any output directory is enough to reproduce the experiment.
"""

from __future__ import annotations

import json
import math
import os
import time

import numpy as np

from . import __version__, field, ids, probes, wegner
from .config import ConfigError, ExperimentConfig, validate
from .field import (Grid, child_seed, decompose, empirical_covariance,
                    gaussian_covariance, make_gaussian_kernel, sample_field,
                    save_field)
from .operator import BoundaryCondition, SolverNotConverged

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4


def _bc(cfg):
    return BoundaryCondition(cfg.bc)


def _setup(cfg):
    kernel = make_gaussian_kernel(cfg.sigma, cfg.xi, cfg.d)
    cov = gaussian_covariance(cfg.sigma, cfg.xi, cfg.d, window_ell=cfg.ell)
    grid = Grid(dimension=cfg.d, side_length=cfg.L, spacing=cfg.h)
    return kernel, cov, grid


def _write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def run(cfg, out_dir=None, master_seed=None, workers=None, fmt=None):
    """Execute one experiment; returns a process exit status.

    0 success, 2 config/window errors, 3 solver failures, 4 physics
    validation failures (for example a Lipschitz-bound margin beyond 3
    standard errors).
    """
    cfg = ExperimentConfig(**{**cfg.to_dict(),
                              **({"out_dir": out_dir} if out_dir else {}),
                              **({"master_seed": master_seed} if master_seed is not None else {}),
                              **({"workers": workers} if workers is not None else {}),
                              **({"format": fmt} if fmt else {})})
    try:
        validate(cfg)
    except ConfigError as exc:
        print("\n".join(exc.errors))
        return EXIT_CONFIG
    os.makedirs(cfg.out_dir, exist_ok=True)
    start = time.time()
    failures = {"samples_failed": 0}
    try:
        status = _DISPATCH[cfg.kind](cfg, failures)
    except (ConfigError, ids.ValidityWindowViolation, ValueError,
            field.FieldError, wegner.VolumeTooSmall) as exc:
        print(f"config error: {exc}")
        _write_manifest(cfg, start, failures, EXIT_CONFIG, str(exc))
        return EXIT_CONFIG
    except SolverNotConverged as exc:
        print(f"solver failure: {exc}")
        _write_manifest(cfg, start, failures, EXIT_SOLVER, str(exc))
        return EXIT_SOLVER
    _write_manifest(cfg, start, failures, status, None)
    return status


def _write_manifest(cfg, start, failures, status, error):
    manifest = {
        "config": cfg.to_dict(),
        "version": __version__,
        "master_seed": cfg.master_seed,
        "wall_time_s": time.time() - start,
        "failures": failures,
        "exit_status": status,
        "error": error,
    }
    _write_json(manifest, os.path.join(cfg.out_dir, "manifest.json"))


def _run_sample_field(cfg, failures):
    kernel, _, grid = _setup(cfg)
    for k in range(cfg.M):
        sample = sample_field(kernel, grid, child_seed(cfg.master_seed, k))
        save_field(sample, os.path.join(cfg.out_dir, f"field_{k:04d}.txt"))
    return EXIT_OK


def _run_covariance_check(cfg, failures):
    kernel, cov, grid = _setup(cfg)
    offsets = [tuple(off) for off in cfg.offsets]
    samples = [sample_field(kernel, grid, child_seed(cfg.master_seed, k))
               for k in range(cfg.M)]
    rows = []
    ok = True
    for off, est, se in empirical_covariance(samples, offsets):
        x = np.array(off) * grid.spacing
        target = cov.value(x)
        within = se == 0.0 and est == target or abs(est - target) <= 5.0 * se
        ok = ok and within
        rows.append({"offset": list(off), "estimate": est, "std_error": se,
                     "analytic": target, "pass": bool(within)})
    if cfg.format in ("csv", "both"):
        with open(os.path.join(cfg.out_dir, "covariance.csv"), "w") as fh:
            fh.write("offset,estimate,std_error,analytic,pass\n")
            for r in rows:
                fh.write(f"{' '.join(str(c) for c in r['offset'])},"
                         f"{r['estimate']!r},{r['std_error']!r},"
                         f"{r['analytic']!r},{int(r['pass'])}\n")
    if cfg.format in ("json", "both"):
        _write_json({"rows": rows, "M": cfg.M, "master_seed": cfg.master_seed},
                    os.path.join(cfg.out_dir, "covariance.json"))
    return EXIT_OK if ok else EXIT_VALIDATION


def _run_ids(cfg, failures):
    kernel, _, grid = _setup(cfg)
    curve = ids.mc_ids(kernel, grid, _bc(cfg), cfg.energies, cfg.M,
                       cfg.master_seed, workers=cfg.workers)
    failures["samples_failed"] = curve.n_failed
    if cfg.format in ("csv", "both"):
        ids.write_curve_csv(curve, os.path.join(cfg.out_dir, "ids.csv"),
                            master_seed=cfg.master_seed)
    if cfg.format in ("json", "both"):
        ids.write_curve_json(curve, os.path.join(cfg.out_dir, "ids.json"),
                             master_seed=cfg.master_seed,
                             extra={"kernel": {"sigma": cfg.sigma, "xi": cfg.xi}})
    return EXIT_OK if curve.n_failed == 0 else EXIT_SOLVER


def _run_trace_ids(cfg, failures):
    kernel, _, grid = _setup(cfg)
    est, se = ids.trace_ids(kernel, grid, cfg.window_side, cfg.energy, cfg.M,
                            cfg.master_seed, bc=_bc(cfg), workers=cfg.workers)
    _write_json({"estimate": est, "std_error": se, "E": cfg.energy,
                 "window_side": cfg.window_side, "M": cfg.M,
                 "master_seed": cfg.master_seed},
                os.path.join(cfg.out_dir, "trace_ids.json"))
    return EXIT_OK


def _run_wegner_eval(cfg, failures):
    _, cov, _ = _setup(cfg)
    rows = []
    for E in cfg.energies:
        ev = wegner.evaluate(cov, E, t=cfg.t)
        rows.append({"E": ev.E, "t": ev.t, "ellE": ev.ell_E, "bE": ev.b_E,
                     "CE": ev.C_E, "W": ev.W})
    if cfg.format in ("csv", "both"):
        with open(os.path.join(cfg.out_dir, "wegner_eval.csv"), "w") as fh:
            fh.write("E,t,ellE,bE,CE,W\n")
            for r in rows:
                fh.write(",".join(repr(r[k]) for k in ("E", "t", "ellE", "bE", "CE", "W")) + "\n")
    if cfg.format in ("json", "both"):
        _write_json({"rows": rows}, os.path.join(cfg.out_dir, "wegner_eval.json"))
    return EXIT_OK


def _run_wegner_verify(cfg, failures):
    kernel, cov, grid = _setup(cfg)
    records = wegner.verify_wegner(kernel, cov, grid, _bc(cfg),
                                   cfg.energy_pairs, cfg.M, cfg.master_seed,
                                   workers=cfg.workers)
    wegner.write_report_json(records, os.path.join(cfg.out_dir, "wegner_verify.json"),
                            extra={"M": cfg.M, "master_seed": cfg.master_seed})
    if cfg.format in ("csv", "both"):
        with open(os.path.join(cfg.out_dir, "wegner_verify.csv"), "w") as fh:
            keys = ("E1", "E2", "E", "lhs", "lhs_err", "rhs", "t", "ellE",
                    "bE", "CE", "margin", "pass")
            fh.write(",".join(keys) + "\n")
            for r in records:
                fh.write(",".join(repr(r[k]) if isinstance(r[k], float) else str(int(r[k])) if isinstance(r[k], bool) else str(r[k])
                                  for k in keys) + "\n")
    return EXIT_OK if all(r["pass"] for r in records) else EXIT_VALIDATION


def _run_asymptotics(cfg, failures):
    _, cov, _ = _setup(cfg)
    report = wegner.wegner_asymptotics(cov)
    _write_json(report, os.path.join(cfg.out_dir, "asymptotics.json"))
    return EXIT_OK


def _run_localize(cfg, failures):
    kernel, _, grid = _setup(cfg)
    report = probes.localization_report(kernel, grid, cfg.low_window,
                                        cfg.mid_window, cfg.M, cfg.master_seed,
                                        bc=_bc(cfg), workers=cfg.workers)
    _write_json(probes.report_to_dict(report, master_seed=cfg.master_seed),
                os.path.join(cfg.out_dir, "localization.json"))
    return EXIT_OK


_DISPATCH = {
    "sample-field": _run_sample_field,
    "covariance-check": _run_covariance_check,
    "ids": _run_ids,
    "trace-ids": _run_trace_ids,
    "wegner-eval": _run_wegner_eval,
    "wegner-verify": _run_wegner_verify,
    "asymptotics": _run_asymptotics,
    "localize": _run_localize,
}
