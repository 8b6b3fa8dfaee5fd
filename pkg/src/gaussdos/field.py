"""Homogeneous Gaussian random fields built from convolution kernels.

A non-negative kernel u convolved with white noise yields a zero-mean
Gaussian field whose covariance is the self-convolution of u.  This
module holds the kernel/covariance descriptions, the grid sampler, the
Monte Carlo covariance estimator, and the one-parameter decomposition
of a realization into its value at the origin plus an independent rest.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field as _dcfield

import numpy as np
from scipy.signal import fftconvolve


class FieldError(Exception):
    """Base class for errors raised by this module."""


class ResolutionTooCoarse(FieldError):
    """Grid spacing too large to resolve the kernel."""


class MemoryBudgetExceeded(FieldError):
    """Padded noise grid would exceed the configured point budget."""


class NonPositiveGamma(FieldError):
    """Covariance ratio attains a non-positive minimum on the window box."""


class KernelValidationError(FieldError):
    """A kernel invariant (non-negativity, smoothness, truncation) fails."""


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class GaussianShape:
    """u(x) = amplitude * exp(-|x|^2 / length^2)."""

    amplitude: float
    length: float


@dataclass(frozen=True)
class TabulatedShape:
    """Kernel given by samples u(k * spacing) as a function of the sup-norm radius.

    Values between samples are linearly interpolated; beyond the table the
    kernel is zero.
    """

    samples: tuple
    spacing: float


@dataclass(frozen=True)
class KernelSpec:
    """Convolution kernel together with its smoothness/decay constants.

    holder_a / holder_alpha bound |u(x+y) - u(x)| <= a |y|^alpha and
    decay_b / decay_beta bound |u(x)| <= b / |x|_inf^beta for |x|_inf >= 1.
    The kernel is treated as identically zero beyond truncation_radius.
    """

    dimension: int
    shape: object
    truncation_radius: float
    holder_a: float
    holder_alpha: float
    decay_b: float
    decay_beta: float

    @property
    def sigma(self):
        """Field standard deviation sqrt(C(0)) implied by the kernel."""
        if isinstance(self.shape, GaussianShape):
            a, xi = self.shape.amplitude, self.shape.length
            return a * (math.pi * xi**2 / 2.0) ** (self.dimension / 4.0)
        return math.sqrt(analytic_covariance(self, np.zeros(self.dimension)))

    def label(self):
        if isinstance(self.shape, GaussianShape):
            return (f"gauss(A={self.shape.amplitude!r},xi={self.shape.length!r},"
                    f"d={self.dimension},R={self.truncation_radius!r})")
        return (f"tab(m={len(self.shape.samples)},dx={self.shape.spacing!r},"
                f"d={self.dimension},R={self.truncation_radius!r})")

    def evaluate(self, points):
        """Kernel values at an array of points with shape (..., d)."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dimension:
            raise ValueError(f"points must have last axis {self.dimension}")
        sup = np.max(np.abs(pts), axis=-1)
        if isinstance(self.shape, GaussianShape):
            r2 = np.sum(pts**2, axis=-1)
            vals = self.shape.amplitude * np.exp(-r2 / self.shape.length**2)
        else:
            tab = np.asarray(self.shape.samples, dtype=float)
            grid = np.arange(len(tab)) * self.shape.spacing
            vals = np.interp(sup, grid, tab, right=0.0)
        return np.where(sup > self.truncation_radius, 0.0, vals)

    def validate(self, eps_trunc=1e-6):
        """Check non-negativity, the discrete Holder bound, the declared decay
        and the truncation mass; warn (only) when beta is too small for the
        strong-decay regime."""
        d = self.dimension
        if isinstance(self.shape, TabulatedShape):
            tab = np.asarray(self.shape.samples, dtype=float)
            if np.any(tab < 0):
                raise KernelValidationError("kernel samples must be non-negative")
            diffs = np.abs(np.diff(tab))
            bound = self.holder_a * self.shape.spacing**self.holder_alpha
            if np.any(diffs > bound * (1 + 1e-12)):
                raise KernelValidationError(
                    f"consecutive samples jump by {diffs.max():g} > "
                    f"holder bound {bound:g}")
        else:
            if self.shape.amplitude < 0:
                raise KernelValidationError("amplitude must be non-negative")
        # decay bound checked on a 1-d radial scan (u depends on |x| or |x|_inf,
        # both dominated by the sup-norm radius)
        radii = np.linspace(1.0, max(self.truncation_radius, 1.0), 257)
        pts = np.zeros((radii.size, d))
        pts[:, 0] = radii
        vals = self.evaluate(pts)
        decay = self.decay_b / radii**self.decay_beta
        if np.any(vals > decay * (1 + 1e-9)):
            raise KernelValidationError("declared decay bound violated on [1, R]")
        if self.decay_beta <= 25.0 * d / 2.0 - 1.0:
            warnings.warn(
                f"decay exponent beta={self.decay_beta:g} <= 25d/2-1="
                f"{25.0 * d / 2.0 - 1.0:g}; fine numerically, too slow for "
                "the strong-decay regime", stacklevel=2)
        lost = _truncation_mass_fraction(self)
        if lost >= eps_trunc:
            raise KernelValidationError(
                f"kernel mass fraction {lost:g} outside R exceeds {eps_trunc:g}")
        return self


def _truncation_mass_fraction(kernel):
    """Fraction of int u^2 lying outside the sup-norm ball of radius R."""
    d = kernel.dimension
    R = kernel.truncation_radius
    if isinstance(kernel.shape, GaussianShape):
        if kernel.shape.amplitude == 0.0:
            return 0.0
        xi = kernel.shape.length
        # int_{|x1|<=R} exp(-2 x^2/xi^2) dx factorizes over axes
        inside = math.erf(math.sqrt(2.0) * R / xi) ** d
        return 1.0 - inside
    tab = np.asarray(kernel.shape.samples, dtype=float)
    grid = np.arange(len(tab)) * kernel.shape.spacing
    total = np.trapezoid(tab**2 * np.maximum(grid, grid[1] if len(grid) > 1 else 1.0) ** (d - 1), grid)
    if total == 0.0:
        return 0.0
    outside_mask = grid > R
    if not outside_mask.any():
        return 0.0
    outside = np.trapezoid(np.where(outside_mask, tab**2, 0.0)
                           * np.maximum(grid, grid[1]) ** (d - 1), grid)
    return float(outside / total)


def make_gaussian_kernel(sigma, xi, d):
    """Kernel u(x) = A exp(-x^2/xi^2) whose self-convolution is
    sigma^2 exp(-x^2 / 2 xi^2)."""
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if sigma <= 0 or xi <= 0:
        raise ValueError("sigma and xi must be positive")
    amp = sigma * (math.pi * xi**2 / 2.0) ** (-d / 4.0)
    beta = 13.0 * d  # > 25d/2 - 1 in every dimension
    # tight constant for A exp(-r^2/xi^2) <= b / r^beta on r >= 1
    r_star = max(1.0, xi * math.sqrt(beta / 2.0))
    b = amp * math.exp(beta * math.log(r_star) - r_star**2 / xi**2)
    return KernelSpec(
        dimension=d,
        shape=GaussianShape(amplitude=amp, length=xi),
        truncation_radius=6.0 * xi,
        holder_a=amp * math.sqrt(2.0 / math.e) / xi,
        holder_alpha=1.0,
        decay_b=b * 1.0000001,
        decay_beta=beta,
    )


def zero_kernel(d, xi=1.0):
    """Kernel with amplitude 0; sampling it yields the zero potential."""
    return KernelSpec(
        dimension=d,
        shape=GaussianShape(amplitude=0.0, length=xi),
        truncation_radius=6.0 * xi,
        holder_a=1e-300,
        holder_alpha=1.0,
        decay_b=1e-300,
        decay_beta=13.0 * d,
    )


def analytic_covariance(kernel, x):
    """Self-convolution of the kernel at displacement x.

    Gaussian kernels use the closed form; tabulated kernels fall back to a
    trapezoid-rule convolution.  Zero beyond twice the truncation radius.
    """
    d = kernel.dimension
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.shape != (d,):
        raise ValueError(f"x must have {d} components")
    if np.max(np.abs(pt)) > 2.0 * kernel.truncation_radius:
        return 0.0
    if isinstance(kernel.shape, GaussianShape):
        a, xi = kernel.shape.amplitude, kernel.shape.length
        sigma2 = a**2 * (math.pi * xi**2 / 2.0) ** (d / 2.0)
        return float(sigma2 * math.exp(-float(np.sum(pt**2)) / (2.0 * xi**2)))
    return _numeric_self_convolution(kernel, pt)


def _numeric_self_convolution(kernel, x, points_per_axis=201):
    R = kernel.truncation_radius
    axes = [np.linspace(-R, R, points_per_axis)] * kernel.dimension
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    w1 = np.ones(points_per_axis)
    w1[0] = w1[-1] = 0.5
    w = w1
    for _ in range(kernel.dimension - 1):
        w = np.multiply.outer(w, w1)
    h = axes[0][1] - axes[0][0]
    u0 = kernel.evaluate(mesh)
    ux = kernel.evaluate(mesh + x)
    return float(np.sum(w * u0 * ux) * h**kernel.dimension)


# ---------------------------------------------------------------------------
# covariances


@dataclass(frozen=True)
class GaussianCov:
    """C(x) = sigma^2 exp(-|x|^2 / 2 xi^2)."""

    sigma: float
    length: float


@dataclass(frozen=True)
class FromKernel:
    kernel: KernelSpec


@dataclass
class CovarianceSpec:
    """A covariance function with its variance and correlation window.

    window_gamma is the minimum of C(x)/C(0) over the box |x|_inf <= ell/2;
    it is recomputed, never assumed.
    """

    dimension: int
    form: object
    c0: float
    window_ell: float
    window_gamma: float = _dcfield(default=0.0)

    def value(self, x):
        pt = np.atleast_1d(np.asarray(x, dtype=float))
        if isinstance(self.form, GaussianCov):
            s, xi = self.form.sigma, self.form.length
            return float(s**2 * math.exp(-float(np.sum(pt**2)) / (2.0 * xi**2)))
        return analytic_covariance(self.form.kernel, pt)

    def values(self, points):
        """Vectorized C over an array of points with shape (..., d)."""
        pts = np.asarray(points, dtype=float)
        if isinstance(self.form, GaussianCov):
            s, xi = self.form.sigma, self.form.length
            return s**2 * np.exp(-np.sum(pts**2, axis=-1) / (2.0 * xi**2))
        flat = pts.reshape(-1, self.dimension)
        out = np.array([analytic_covariance(self.form.kernel, p) for p in flat])
        return out.reshape(pts.shape[:-1])


def _min_ratio_on_box(cov, half, rel_tol=1e-6, max_rounds=40):
    """Minimum of C(x)/C(0) over |x|_inf <= half by refined grid scan."""
    d = cov.dimension
    pts_per_axis = 17 if d < 3 else 9
    center = np.zeros(d)
    width = half
    best = None
    for _ in range(max_rounds):
        axes = [np.linspace(c - width, c + width, pts_per_axis) for c in center]
        axes = [np.clip(a, -half, half) for a in axes]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = cov.values(mesh) / cov.c0
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        val = float(vals[idx])
        center = mesh[idx]
        new_width = width * 2.0 / (pts_per_axis - 1)
        if best is not None and abs(best - val) <= rel_tol * max(abs(best), 1e-30):
            best = min(best, val)
            break
        best = val if best is None else min(best, val)
        width = new_width
    return best


def correlation_window(cov, ell):
    """Minimum of C(x)/C(0) over the window box of side ell; must be positive."""
    if ell <= 0:
        raise ValueError("window length must be positive")
    gamma = _min_ratio_on_box(cov, ell / 2.0)
    if gamma <= 0:
        raise NonPositiveGamma(
            f"min C/C(0) = {gamma:g} on the box of half-width {ell / 2:g}; "
            "shrink the window")
    return gamma


def gaussian_covariance(sigma, xi, d, window_ell=None):
    """Gaussian covariance spec with its window constants filled in."""
    if sigma <= 0 or xi <= 0:
        raise ValueError("sigma and xi must be positive")
    ell = xi if window_ell is None else window_ell
    cov = CovarianceSpec(dimension=d, form=GaussianCov(sigma=sigma, length=xi),
                         c0=sigma**2, window_ell=ell)
    cov.window_gamma = correlation_window(cov, ell)
    return cov


def covariance_from_kernel(kernel, window_ell):
    c0 = analytic_covariance(kernel, np.zeros(kernel.dimension))
    if c0 <= 0:
        raise ValueError("kernel has zero variance")
    cov = CovarianceSpec(dimension=kernel.dimension, form=FromKernel(kernel),
                         c0=c0, window_ell=window_ell)
    cov.window_gamma = correlation_window(cov, window_ell)
    return cov


# ---------------------------------------------------------------------------
# grids and samples


@dataclass(frozen=True)
class Grid:
    """Uniform grid on a cube of side L centered at the origin.

    Points per axis sit at i*h - L/2 for i = 0 .. n-1, so the origin is a
    grid point whenever n is even.
    """

    dimension: int
    side_length: float
    spacing: float

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        n = round(self.side_length / self.spacing)
        if n < 2:
            raise ValueError("need at least 2 points per side")
        if abs(n * self.spacing - self.side_length) > 1e-9 * self.side_length:
            raise ValueError(
                f"side length {self.side_length} is not a multiple of "
                f"spacing {self.spacing}")

    @property
    def points_per_side(self):
        return round(self.side_length / self.spacing)

    @property
    def volume(self):
        return self.side_length**self.dimension

    @property
    def shape(self):
        return (self.points_per_side,) * self.dimension

    def axis(self):
        n = self.points_per_side
        return np.arange(n) * self.spacing - self.side_length / 2.0

    def origin_index(self):
        """Per-axis index of the grid point nearest the origin."""
        ax = self.axis()
        return (int(np.argmin(np.abs(ax))),) * self.dimension

    def coordinates(self):
        """Array of shape grid.shape + (d,) with physical coordinates."""
        axes = [self.axis()] * self.dimension
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class FieldSample:
    """One realization of the random field on a grid."""

    grid: Grid
    values: np.ndarray
    seed: int
    kernel_id: str


def child_seed(master_seed, k):
    """Per-sample seed derived from (master seed, sample index).

    Uses numpy's SeedSequence entropy mixing so ensembles are reproducible
    under any parallel schedule.
    """
    return int(np.random.SeedSequence((int(master_seed), int(k))).generate_state(1, np.uint64)[0])


def sample_field(kernel, grid, seed, resolution_ratio=4.0, max_points=2**26):
    """Draw one field realization: white noise on a padded grid convolved
    with the kernel, scaled by h^{d/2}.

    The convolution is linear (zero-padded) with padding of one truncation
    radius per side, so every interior point sees the full kernel support
    and no wrap-around correlations appear.  Deterministic in
    (kernel, grid, seed).
    """
    d = grid.dimension
    if d != kernel.dimension:
        raise ValueError("kernel and grid dimensions differ")
    h = grid.spacing
    if isinstance(kernel.shape, GaussianShape) and kernel.shape.amplitude != 0.0:
        if h > kernel.shape.length / resolution_ratio * (1 + 1e-12):
            raise ResolutionTooCoarse(
                f"spacing {h:g} > kernel length / {resolution_ratio:g}")
    pad = int(math.ceil(kernel.truncation_radius / h))
    n = grid.points_per_side
    ext = n + 2 * pad
    if ext**d > max_points:
        raise MemoryBudgetExceeded(
            f"padded grid has {ext**d} points > budget {max_points}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    noise = rng.standard_normal((ext,) * d)
    off = np.arange(-pad, pad + 1) * h
    stencil_pts = np.stack(np.meshgrid(*([off] * d), indexing="ij"), axis=-1)
    stencil = kernel.evaluate(stencil_pts)
    values = h ** (d / 2.0) * fftconvolve(noise, stencil, mode="valid")
    if isinstance(kernel.shape, GaussianShape) and kernel.shape.amplitude == 0.0:
        values = np.zeros_like(values)
    return FieldSample(grid=grid, values=values, seed=int(seed),
                       kernel_id=kernel.label())


def empirical_covariance(samples, offsets):
    """Monte Carlo estimate of C at lattice offsets.

    For each offset the product values[x] * values[x + delta] is averaged
    over all admissible base points and over samples; the reported error is
    the between-sample standard error of the spatial means.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    if not offsets:
        raise ValueError("empty offset list")
    grid = samples[0].grid
    for s in samples[1:]:
        if s.grid != grid:
            raise ValueError("samples live on different grids")
    d = grid.dimension
    n = grid.points_per_side
    results = []
    for delta in offsets:
        dl = (delta,) if np.isscalar(delta) else tuple(int(c) for c in delta)
        if len(dl) != d:
            raise ValueError(f"offset {delta} has wrong dimension")
        if any(abs(c) >= n for c in dl):
            raise ValueError(f"offset {delta} exceeds the grid")
        src = tuple(slice(max(0, -c), n - max(0, c)) for c in dl)
        dst = tuple(slice(max(0, c), n + min(0, c)) for c in dl)
        per_sample = np.array(
            [np.mean(s.values[src] * s.values[dst]) for s in samples])
        est = float(np.mean(per_sample))
        se = float(np.std(per_sample, ddof=1) / math.sqrt(len(samples)))
        results.append((dl, est, se))
    return results


# ---------------------------------------------------------------------------
# decomposition V = U + V(0) C/C(0)


@dataclass(frozen=True)
class Decomposition:
    """Split of a realization into its origin value times the correlation
    profile plus an uncorrelated remainder."""

    u_field: np.ndarray
    v0: float
    profile: np.ndarray


def decompose(sample, cov):
    """V(x) = U(x) + V(0) * C(x)/C(0) with the origin snapped to the nearest
    grid point.  U vanishes at that point and is independent of V(0)."""
    grid = sample.grid
    origin = grid.origin_index()
    coords = grid.coordinates()
    origin_coord = coords[origin]
    profile = cov.values(coords - origin_coord) / cov.c0
    v0 = float(sample.values[origin])
    u_field = sample.values - v0 * profile
    return Decomposition(u_field=u_field, v0=v0, profile=profile)


# ---------------------------------------------------------------------------
# snapshot file format

_FORMAT = "gaussdos-field-1"


def save_field(sample, path):
    """Write a sample as a header line (JSON) followed by one value per line
    in row-major order.  repr round-trips floats exactly."""
    grid = sample.grid
    header = {
        "format": _FORMAT,
        "d": grid.dimension,
        "L": grid.side_length,
        "h": grid.spacing,
        "n": grid.points_per_side,
        "seed": sample.seed,
        "kernel": sample.kernel_id,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in sample.values.ravel(order="C"):
            fh.write(repr(float(v)) + "\n")


def load_field(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != _FORMAT:
            raise ValueError(f"unrecognized snapshot format {header.get('format')!r}")
        values = np.array([float(line) for line in fh])
    grid = Grid(dimension=header["d"], side_length=header["L"], spacing=header["h"])
    return FieldSample(grid=grid,
                       values=values.reshape(grid.shape),
                       seed=header["seed"],
                       kernel_id=header["kernel"])
