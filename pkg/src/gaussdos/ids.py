"""Integrated density of states: per-volume eigenvalue counting, Monte Carlo
curves over disorder realizations, the windowed trace estimator, and checks
of the high-energy (Weyl) and low-energy (Gaussian tail) asymptotics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from . import wegner as wegner_mod
from .field import child_seed, sample_field
from .operator import (BoundaryCondition, SolverNotConverged, assemble,
                       eigenpairs_below, eigenvalues_below)
from .parallel import pmap

# eigenvalue counts are trusted only well below the discrete band edge 1/h^2
VALIDITY_FACTOR = 0.1


class IDSError(Exception):
    pass


class CutoffExceeded(IDSError):
    pass


class ValidityWindowViolation(IDSError):
    pass


class InsufficientTailData(IDSError):
    pass


@dataclass
class IDSCurve:
    """Monte Carlo estimate of the per-volume counting function."""

    energies: np.ndarray
    per_volume_mean: np.ndarray
    std_error: np.ndarray
    samples: int
    bc: BoundaryCondition
    grid: object
    n_failed: int = 0


def check_validity_window(grid, energies):
    h2 = grid.spacing**2
    worst = max((e for e in energies), default=0.0)
    if worst > 0 and h2 * worst > VALIDITY_FACTOR:
        raise ValidityWindowViolation(
            f"h^2 E = {h2 * worst:g} exceeds {VALIDITY_FACTOR}; "
            "refine the grid or lower the energies")


def finite_ids(spectrum, E):
    """Number of eigenvalues strictly below E, with multiplicity."""
    if spectrum.complete_below_cutoff and E > spectrum.cutoff:
        raise CutoffExceeded(f"E = {E:g} above spectrum cutoff {spectrum.cutoff:g}")
    return int(np.searchsorted(spectrum.eigenvalues, E, side="left"))


def _count_sample(args):
    kernel, grid, bc, energies, seed = args
    try:
        sample = sample_field(kernel, grid, seed)
        spec = eigenvalues_below(assemble(sample, bc), E_max=max(energies))
    except SolverNotConverged as exc:
        return None, str(exc)
    return np.searchsorted(spec.eigenvalues, energies, side="left"), None


def mc_ids(kernel, grid, bc, energies, M, master_seed, workers=1):
    """Ensemble average of the per-volume counting function at each energy.

    Deterministic in master_seed; failed samples are dropped from the
    average, counted, and reported on the curve.
    """
    if M < 2:
        raise ValueError("need M >= 2")
    energies = np.asarray(sorted(energies), dtype=float)
    check_validity_window(grid, energies)
    tasks = [(kernel, grid, bc, tuple(energies), child_seed(master_seed, k))
             for k in range(M)]
    results = pmap(_count_sample, tasks, workers)
    counts = np.array([r[0] for r in results if r[0] is not None], dtype=float)
    n_failed = sum(1 for r in results if r[0] is None)
    if len(counts) < 2:
        raise SolverNotConverged("fewer than 2 samples succeeded")
    vol = grid.volume
    mean = counts.mean(axis=0) / vol
    se = counts.std(axis=0, ddof=1) / math.sqrt(len(counts)) / vol
    return IDSCurve(energies=energies, per_volume_mean=mean, std_error=se,
                    samples=len(counts), bc=bc, grid=grid, n_failed=n_failed)


def _window_mask(grid, window_side):
    coords = grid.coordinates()
    sup = np.max(np.abs(coords), axis=-1)
    return sup <= window_side / 2.0 + 1e-12 * grid.side_length


def _trace_sample(args):
    kernel, grid, bc, E, window_side, seed = args
    sample = sample_field(kernel, grid, seed)
    spec, vecs = eigenpairs_below(assemble(sample, bc), E_max=E)
    mask = _window_mask(grid, window_side).ravel(order="C")
    h_d = grid.spacing**grid.dimension
    if vecs.shape[1] == 0:
        return 0.0, int(np.count_nonzero(mask))
    mass = np.sum(np.abs(vecs[mask, :]) ** 2, axis=0) * h_d
    return float(np.sum(mass)), int(np.count_nonzero(mask))


def trace_ids(kernel, big_grid, window_side, E, M, master_seed,
              bc=BoundaryCondition.DIRICHLET, workers=1, min_buffer=None):
    """IDS from eigenvector mass inside a sub-cube of side window_side.

    The window must keep a buffer from the boundary of at least 2R (and
    4 xi for Gaussian kernels) on every side, unless it covers the whole
    cube, in which case the estimator reduces exactly to plain counting.
    """
    check_validity_window(big_grid, [E])
    full = window_side >= big_grid.side_length - 1e-12 * big_grid.side_length
    if not full:
        if min_buffer is None:
            min_buffer = 2.0 * kernel.truncation_radius
            shape = kernel.shape
            if hasattr(shape, "length"):
                min_buffer = max(min_buffer, 4.0 * shape.length)
        buffer = (big_grid.side_length - window_side) / 2.0
        if buffer < min_buffer:
            raise ValueError(
                f"window buffer {buffer:g} below required {min_buffer:g}")
    tasks = [(kernel, big_grid, bc, E, window_side, child_seed(master_seed, k))
             for k in range(M)]
    results = pmap(_trace_sample, tasks, workers)
    n_window = results[0][1]
    vol = n_window * big_grid.spacing**big_grid.dimension
    per = np.array([r[0] for r in results]) / vol
    return float(per.mean()), float(per.std(ddof=1) / math.sqrt(M))


def weyl_target(d):
    return (2.0 * math.pi) ** (-d / 2.0) / gamma_fn(1.0 + d / 2.0)


def weyl_check(curve, E_list):
    """Compare N(E)/E^{d/2} against the free high-energy constant."""
    d = curve.grid.dimension
    target = weyl_target(d)
    out = []
    for E in E_list:
        if curve.grid.spacing**2 * E > VALIDITY_FACTOR:
            raise ValidityWindowViolation(f"E = {E:g} outside the validity window")
        idx = int(np.argmin(np.abs(curve.energies - E)))
        if abs(curve.energies[idx] - E) > 1e-9 * max(1.0, abs(E)):
            raise ValueError(f"energy {E:g} not on the curve")
        out.append((float(E), float(curve.per_volume_mean[idx] / E ** (d / 2.0)),
                    float(target)))
    return out


def tail_check(curve, c0):
    """Fit ln N against E^2 deep in the low-energy tail.

    The asymptotic slope is -1/(2 C(0)); at desk scale only the trend is
    recoverable, so callers compare with a generous factor.
    """
    thresh = -2.0 * math.sqrt(c0)
    mask = (curve.energies < thresh) & (curve.per_volume_mean > 0)
    if int(mask.sum()) < 4:
        raise InsufficientTailData(
            f"only {int(mask.sum())} usable energies below {thresh:g}; "
            "increase M or the energy range")
    x = curve.energies[mask] ** 2
    y = np.log(curve.per_volume_mean[mask])
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, -1.0 / (2.0 * c0)


def density_bound_check(curve, cov):
    """Central-difference dN/dE against the explicit Lipschitz constant W(E)."""
    E = curve.energies
    dE = np.diff(E)
    if not np.allclose(dE, dE[0], rtol=1e-9, atol=0.0):
        raise ValueError("energy grid must be uniform")
    step = float(dE[0])
    out = []
    for i in range(1, len(E) - 1):
        deriv = (curve.per_volume_mean[i + 1] - curve.per_volume_mean[i - 1]) / (2 * step)
        err = math.hypot(curve.std_error[i + 1], curve.std_error[i - 1]) / (2 * step)
        t = wegner_mod.closed_form_t(cov, E[i])
        w = wegner_mod.wegner_constant(cov, E[i], t)
        out.append((float(E[i]), float(deriv), float(w), bool(deriv <= w + 3 * err)))
    return out


def write_curve_csv(curve, path, master_seed=None):
    with open(path, "w") as fh:
        fh.write("E,per_volume_mean,std_error,M,bc,L,h,seed\n")
        for e, m, s in zip(curve.energies, curve.per_volume_mean, curve.std_error):
            fh.write(f"{float(e)!r},{float(m)!r},{float(s)!r},{curve.samples},"
                     f"{curve.bc.value},{curve.grid.side_length!r},"
                     f"{curve.grid.spacing!r},{master_seed}\n")


def curve_provenance(curve, master_seed=None, extra=None):
    env = {
        "energies": [float(e) for e in curve.energies],
        "per_volume_mean": [float(m) for m in curve.per_volume_mean],
        "std_error": [float(s) for s in curve.std_error],
        "M": curve.samples,
        "n_failed": curve.n_failed,
        "bc": curve.bc.value,
        "grid": {"d": curve.grid.dimension, "L": curve.grid.side_length,
                 "h": curve.grid.spacing},
        "master_seed": master_seed,
    }
    if extra:
        env.update(extra)
    return env


def write_curve_json(curve, path, master_seed=None, extra=None):
    with open(path, "w") as fh:
        json.dump(curve_provenance(curve, master_seed, extra), fh,
                  sort_keys=True, indent=1)
        fh.write("\n")
