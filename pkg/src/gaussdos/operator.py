"""Finite-volume Hamiltonians -1/2 Laplacian + V on a cube, and their spectra.

Second-order central differences; Dirichlet pins the solution to zero just
outside the cube, Neumann reflects through ghost points.  Both give exactly
symmetric sparse matrices, and the Dirichlet matrix dominates the Neumann
one by a non-negative boundary diagonal, which yields the eigenvalue
counting inequality between the two boundary conditions sample by sample.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class OperatorError(Exception):
    pass


class SolverNotConverged(OperatorError):
    """The sparse eigensolver failed; never silently truncated."""


class BoundaryCondition(enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


def kinetic_1d(n, h, bc):
    """Sparse n x n discretization of -1/2 d^2/dx^2."""
    diag = np.full(n, 1.0 / h**2)
    if bc is BoundaryCondition.NEUMANN:
        # ghost reflection psi[-1] = psi[0]: boundary rows sum to zero
        diag[0] -= 0.5 / h**2
        diag[-1] -= 0.5 / h**2
    off = np.full(n - 1, -0.5 / h**2)
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def kinetic_matrix(grid, bc):
    """Kronecker sum of the 1-d stencils over all axes."""
    n, h, d = grid.points_per_side, grid.spacing, grid.dimension
    k1 = kinetic_1d(n, h, bc)
    mat = k1
    for _ in range(d - 1):
        mat = sp.kronsum(mat, k1, format="csr")
    return mat


@dataclass(frozen=True)
class Hamiltonian:
    grid: object
    bc: BoundaryCondition
    potential: np.ndarray
    matrix: sp.csr_matrix


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted ascending, counted with multiplicity, below cutoff."""

    eigenvalues: np.ndarray
    cutoff: float
    complete_below_cutoff: bool


def assemble(field, bc):
    """H = kinetic + diag(V) for one field realization."""
    if not np.all(np.isfinite(field.values)):
        raise ValueError("potential contains non-finite values")
    mat = kinetic_matrix(field.grid, bc) + sp.diags(field.values.ravel(order="C"))
    return Hamiltonian(grid=field.grid, bc=bc, potential=field.values,
                       matrix=mat.tocsr())


def _gershgorin_lower(matrix):
    diag = matrix.diagonal()
    absrow = np.abs(matrix).sum(axis=1).ravel() - np.abs(diag)
    return float(np.min(diag - absrow))


def _is_tridiagonal(matrix):
    coo = matrix.tocoo()
    return np.all(np.abs(coo.row - coo.col) <= 1)


def _tridiag_bands(matrix):
    n = matrix.shape[0]
    diag = matrix.diagonal()
    off = matrix.diagonal(1)
    assert off.shape == (n - 1,)
    return np.asarray(diag, dtype=float), np.asarray(off, dtype=float)


def eigenvalues_below(H, E_max, dense_cutoff=2048):
    """All eigenvalues strictly below E_max.

    Tridiagonal matrices use bisection (certified complete); small matrices
    full dense diagonalization; large ones shift-invert Lanczos with k grown
    until an eigenvalue at or above E_max certifies completeness.
    """
    vals, _ = _eigen_below(H.matrix, E_max, dense_cutoff, want_vectors=False)
    return Spectrum(eigenvalues=vals, cutoff=float(E_max),
                    complete_below_cutoff=True)


def eigenpairs_below(H, E_max, dense_cutoff=2048):
    """Like eigenvalues_below but also returns eigenvectors, normalized in
    the discrete L2 norm (sum |psi|^2 h^d = 1), shaped (dim, n_eig)."""
    vals, vecs = _eigen_below(H.matrix, E_max, dense_cutoff, want_vectors=True)
    vecs = vecs / H.grid.spacing ** (H.grid.dimension / 2.0)
    spec = Spectrum(eigenvalues=vals, cutoff=float(E_max),
                    complete_below_cutoff=True)
    return spec, vecs


def _eigen_below(matrix, E_max, dense_cutoff, want_vectors):
    if not math.isfinite(E_max):
        raise ValueError("E_max must be finite")
    dim = matrix.shape[0]
    if dim > 64 and _is_tridiagonal(matrix):
        diag, off = _tridiag_bands(matrix)
        lo = min(_gershgorin_lower(matrix) - 1.0, E_max - 1.0)
        if want_vectors:
            vals, vecs = sla.eigh_tridiagonal(diag, off, select="v",
                                              select_range=(lo, E_max))
            keep = vals < E_max
            return vals[keep], vecs[:, keep]
        vals = sla.eigh_tridiagonal(diag, off, eigvals_only=True, select="v",
                                    select_range=(lo, E_max))
        return vals[vals < E_max], None
    if dim <= dense_cutoff:
        if want_vectors:
            vals, vecs = sla.eigh(matrix.toarray())
            keep = vals < E_max
            return vals[keep], vecs[:, keep]
        vals = sla.eigh(matrix.toarray(), eigvals_only=True)
        return vals[vals < E_max], None
    return _sparse_below(matrix, E_max, want_vectors)


def _sparse_below(matrix, E_max, want_vectors):
    dim = matrix.shape[0]
    sigma = _gershgorin_lower(matrix) - 1.0
    k = 64
    while True:
        k = min(k, dim - 1)
        try:
            out = spla.eigsh(matrix, k=k, sigma=sigma, which="LM",
                             return_eigenvectors=want_vectors)
        except spla.ArpackNoConvergence as exc:
            raise SolverNotConverged(str(exc)) from exc
        vals = out[0] if want_vectors else out
        order = np.argsort(vals)
        vals = vals[order]
        vecs = out[1][:, order] if want_vectors else None
        if vals[-1] >= E_max or k >= dim - 1:
            keep = vals < E_max
            if k >= dim - 1 and vals[-1] < E_max:
                # only the very top eigenvalue may be missing; fetch it
                top = spla.eigsh(matrix, k=1, which="LA",
                                 return_eigenvectors=False)
                if top[0] < E_max:
                    raise SolverNotConverged(
                        "cannot certify completeness below cutoff")
            return (vals[keep], vecs[:, keep] if want_vectors else None)
        k = 2 * k


def free_eigenvalues_1d(n, h, bc):
    """Closed-form spectrum of the 1-d discrete -1/2 Laplacian."""
    if bc is BoundaryCondition.DIRICHLET:
        m = np.arange(1, n + 1)
        return (2.0 / h**2) * np.sin(np.pi * m / (2.0 * (n + 1))) ** 2
    m = np.arange(0, n)
    return (2.0 / h**2) * np.sin(np.pi * m / (2.0 * n)) ** 2


def free_spectrum(grid, bc, E_max):
    """Tensor-sum spectrum of the free operator below E_max."""
    levels = free_eigenvalues_1d(grid.points_per_side, grid.spacing, bc)
    sums = np.array([0.0])
    for _ in range(grid.dimension):
        cand = (sums[:, None] + levels[None, :]).ravel()
        sums = cand[cand < E_max]
    return Spectrum(eigenvalues=np.sort(sums), cutoff=float(E_max),
                    complete_below_cutoff=True)


def write_spectrum_csv(spectrum, path, metadata=None):
    """CSV export: '# key=value' header rows, then (index, eigenvalue)."""
    with open(path, "w") as fh:
        for key, val in (metadata or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write("index,eigenvalue\n")
        for i, ev in enumerate(spectrum.eigenvalues):
            fh.write(f"{i},{float(ev)!r}\n")
