"""Explicit Lipschitz bound on the disorder-averaged eigenvalue counting
function, its energy-dependent constants, the closed-form choice of the
variational parameter, its asymptotics, and the Monte Carlo verification of
the averaged counting inequality on finite cubes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .field import _min_ratio_on_box, child_seed, sample_field
from .operator import assemble, eigenvalues_below
from .parallel import pmap


class WegnerError(Exception):
    pass


class NonPositiveT(WegnerError):
    pass


class VolumeTooSmall(WegnerError):
    pass


@dataclass(frozen=True)
class WegnerEval:
    """One evaluation of the bound with all its ingredients."""

    E: float
    t: float
    ell_E: float
    b_E: float
    C_E: float
    W: float


def wegner_constants(cov, E):
    """Window length, covariance-ratio floor, and effective variance at E.

    ell_E shrinks like |E|^{-1/2} at high |E| but never exceeds the
    covariance window; b_E is the minimum of C/C(0) over the shrunken box;
    C_E = C(0) (2 - b_E^2).
    """
    ell = cov.window_ell
    ell_E = ell if E == 0 else min(abs(E) ** -0.5, ell)
    b_E = _min_ratio_on_box(cov, ell_E / 2.0)
    C_E = cov.c0 * (2.0 - b_E**2)
    return ell_E, b_E, C_E


def log_wegner_constant(cov, E, t, constants=None):
    """ln W(E, t); usable deep in the low-energy tail where W underflows."""
    if t <= 0:
        raise NonPositiveT(f"t must be positive, got {t:g}")
    ell_E, b_E, C_E = constants if constants is not None else wegner_constants(cov, E)
    d = cov.dimension
    return (t * E + t**2 * C_E / 2.0
            - math.log(math.sqrt(2.0 * math.pi * cov.c0) * b_E)
            + d * math.log(2.0 / ell_E + (2.0 * math.pi * t) ** -0.5))


def wegner_constant(cov, E, t, constants=None):
    """W(E, t) = exp(tE + t^2 C_E/2) / (sqrt(2 pi C(0)) b_E)
    * (2/ell_E + (2 pi t)^{-1/2})^d.

    Finite and positive for every t > 0; values beyond float range come
    back as inf (use log_wegner_constant in the deep tail)."""
    try:
        return math.exp(log_wegner_constant(cov, E, t, constants))
    except OverflowError:
        return math.inf


def closed_form_t(cov, E, constants=None):
    """t = (-E + sqrt(E^2 + 2 C_E / pi)) / (2 C_E); always positive."""
    _, _, C_E = constants if constants is not None else wegner_constants(cov, E)
    if E <= 0:
        return (-E + math.sqrt(E**2 + 2.0 * C_E / math.pi)) / (2.0 * C_E)
    # algebraically identical, stable against cancellation for large E > 0
    return (1.0 / math.pi) / (E + math.sqrt(E**2 + 2.0 * C_E / math.pi))


def evaluate(cov, E, t=None):
    """Bundle the constants, the parameter choice, and W at one energy."""
    consts = wegner_constants(cov, E)
    if t is None:
        t = closed_form_t(cov, E, consts)
    return WegnerEval(E=float(E), t=float(t), ell_E=consts[0], b_E=consts[1],
                      C_E=consts[2], W=wegner_constant(cov, E, t, consts))


def wegner_asymptotics(cov, neg_energies=None, pos_energies=None):
    """Sweep W at the closed-form t and compare with the limits it shares
    with the integrated density of states: ln W / E^2 -> -1/(2 C(0)) at low
    energy and W / E^{d/2} -> 3^d e^{1/(2 pi)} / sqrt(2 pi C(0)) at high."""
    d = cov.dimension
    if neg_energies is None:
        neg_energies = [-10.0, -30.0, -100.0]
    if pos_energies is None:
        pos_energies = [1e2, 1e3, 1e4]
    low_target = -1.0 / (2.0 * cov.c0)
    high_target = 3.0**d * math.exp(1.0 / (2.0 * math.pi)) / math.sqrt(2.0 * math.pi * cov.c0)
    low = []
    for E in neg_energies:
        consts = wegner_constants(cov, E)
        t = closed_form_t(cov, E, consts)
        low.append({"E": E, "ln_W_over_E2": log_wegner_constant(cov, E, t, consts) / E**2,
                    "target": low_target})
    high = []
    for E in pos_energies:
        consts = wegner_constants(cov, E)
        t = closed_form_t(cov, E, consts)
        high.append({"E": E, "W_over_E_d2": wegner_constant(cov, E, t, consts) / E ** (d / 2.0),
                     "target": high_target})
    return {"low_energy": low, "high_energy": high,
            "low_target": low_target, "high_target": high_target}


def _pair_counts(args):
    kernel, grid, bc, energies, seed = args
    sample = sample_field(kernel, grid, seed)
    spec = eigenvalues_below(assemble(sample, bc), E_max=max(energies))
    return np.searchsorted(spec.eigenvalues, energies, side="left")


def verify_wegner(kernel, cov, grid, bc, energy_pairs, M, master_seed,
                  workers=1):
    """Monte Carlo check of E| N(E1) - N(E2) | <= |cube| |E1 - E2| W(E).

    Requires the cube volume to be at least ell^d.  Returns one record per
    triple with the estimate, the bound at the closed-form t, and the
    relative margin.
    """
    if grid.volume < cov.window_ell**grid.dimension:
        raise VolumeTooSmall(
            f"|cube| = {grid.volume:g} < ell^d = {cov.window_ell**grid.dimension:g}")
    for (e1, e2, e) in energy_pairs:
        if e1 > e or e2 > e:
            raise ValueError(f"need E1, E2 <= E in triple ({e1}, {e2}, {e})")
    all_energies = sorted({float(x) for trip in energy_pairs for x in trip[:2]})
    h2 = grid.spacing**2
    if max(all_energies) > 0 and h2 * max(all_energies) > 0.1:
        raise ValueError("energies outside the discretization validity window")
    tasks = [(kernel, grid, bc, tuple(all_energies), child_seed(master_seed, k))
             for k in range(M)]
    counts = np.array(pmap(_pair_counts, tasks, workers), dtype=float)
    index = {e: i for i, e in enumerate(all_energies)}
    vol = grid.volume
    records = []
    for (e1, e2, e) in energy_pairs:
        diffs = np.abs(counts[:, index[float(e1)]] - counts[:, index[float(e2)]])
        lhs = float(diffs.mean())
        lhs_err = float(diffs.std(ddof=1) / math.sqrt(M))
        consts = wegner_constants(cov, e)
        t = closed_form_t(cov, e, consts)
        w = wegner_constant(cov, e, t, consts)
        rhs = vol * abs(e1 - e2) * w
        margin = 1.0 if rhs == 0 and lhs == 0 else (rhs - lhs) / rhs
        records.append({
            "E1": float(e1), "E2": float(e2), "E": float(e),
            "lhs": lhs, "lhs_err": lhs_err, "rhs": float(rhs),
            "t": float(t), "ellE": consts[0], "bE": consts[1], "CE": consts[2],
            "margin": float(margin),
            "pass": bool(lhs + 3.0 * lhs_err <= rhs),
        })
    return records


def write_report_json(records, path, extra=None):
    payload = {"records": records}
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
