"""Log-correlated fields on periodic grids.

Grids are cubes of side ``L = n * spacing`` with the origin at the center: site
``i`` along an axis sits at ``(i - n/2) * spacing``.  Two samplers are provided:

* a layered white-noise field, the sum over scales ``t in [eps, R]`` of white
  noise convolved with ``b(./t) t^(-(d+1)/2)``;
* a spectral log-correlated field with density ``c_d |k|^-d`` on the nonzero
  torus frequencies.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage, stats
from scipy.stats import qmc

from .errors import ResourceLimitError, ValidationError
from .kernel import BumpProfile, DimensionConstants, RadialKernel, radial_bessel, surface_area
from .rng import gaussian_grid

# Default cap on grid sites (n^d) for a single field.
MAX_SITES = 1 << 26

SAMPLER_IDS = {"white_noise_layers": 0, "spectral": 1}

# Stream tags so the two samplers never share random numbers.
_WHITE_NOISE_TAG = 1
_SPECTRAL_TAG = 2


class FieldError(ValidationError):
    """Invalid grid, field or resolution request."""


def _rfft(a: np.ndarray) -> np.ndarray:
    return np.fft.rfftn(a, axes=tuple(range(a.ndim)))


def _irfft(a: np.ndarray, s) -> np.ndarray:
    return np.fft.irfftn(a, s=s, axes=tuple(range(len(s))))


@dataclass(frozen=True)
class GridSpec:
    dimension_d: int
    n_per_axis: int
    spacing: float
    periodic: bool = True
    max_sites: int = MAX_SITES

    def __post_init__(self):
        if self.dimension_d < 2:
            raise FieldError(f"dimension must be >= 2, got {self.dimension_d}")
        n = self.n_per_axis
        if n < 4 or n & (n - 1):
            raise FieldError(f"n_per_axis must be a power of two >= 4, got {n}")
        if not self.spacing > 0:
            raise FieldError("spacing must be positive")
        if not self.periodic:
            raise FieldError("only periodic grids are supported")
        if n**self.dimension_d > self.max_sites:
            raise ResourceLimitError(
                f"{n}^{self.dimension_d} sites exceeds the cap of {self.max_sites}")

    @classmethod
    def from_box(cls, d: int, n: int, box_size: float, **kw) -> "GridSpec":
        return cls(d, n, box_size / n, **kw)

    @property
    def box_size(self) -> float:
        return self.n_per_axis * self.spacing

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dimension_d

    @property
    def n_sites(self) -> int:
        return self.n_per_axis**self.dimension_d

    def axis(self) -> np.ndarray:
        n = self.n_per_axis
        return (np.arange(n) - n // 2) * self.spacing

    def site_of(self, point) -> tuple[int, ...]:
        """Nearest site index of a physical point (periodic)."""
        point = np.asarray(point, dtype=np.float64)
        idx = np.rint(point / self.spacing).astype(np.int64) + self.n_per_axis // 2
        return tuple(int(i) for i in np.mod(idx, self.n_per_axis))

    def position(self, site) -> np.ndarray:
        return (np.asarray(site, dtype=np.float64) - self.n_per_axis // 2) * self.spacing

    def offset_radii(self) -> np.ndarray:
        """Minimum-image distance of every site from site 0 (FFT layout)."""
        n = self.n_per_axis
        o = np.fft.fftfreq(n, 1.0 / n) * self.spacing
        sq = functools.reduce(np.add.outer, [o**2] * self.dimension_d)
        return np.sqrt(sq)

    def rfreq_radii(self) -> np.ndarray:
        """|k| on the real-FFT half spectrum (cycles per unit length)."""
        n, h = self.n_per_axis, self.spacing
        axes = [np.fft.fftfreq(n, h)] * (self.dimension_d - 1) + [np.fft.rfftfreq(n, h)]
        sq = functools.reduce(np.add.outer, [a**2 for a in axes])
        return np.sqrt(sq)


@dataclass(frozen=True)
class Anchor:
    center: tuple[float, ...]
    radius: float
    anchor_kind: str = "sphere_avg_zero"


@dataclass(frozen=True, eq=False)
class FieldSample:
    grid: GridSpec
    values: np.ndarray
    epsilon: float
    sampler: str
    seed: int
    anchor: Anchor | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise FieldError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FieldError("field values must be finite")
        if self.sampler not in SAMPLER_IDS:
            raise FieldError(f"unknown sampler {self.sampler!r}")

    @property
    def sampler_id(self) -> int:
        return SAMPLER_IDS[self.sampler]

    def with_values(self, values: np.ndarray, **changes) -> "FieldSample":
        return replace(self, values=values, **changes)


# --------------------------------------------------------------------------- spheres


def sphere_points(d: int, n: int) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors, shape (n, d)."""
    j = np.arange(n)
    if d == 2:
        th = 2 * math.pi * j / n
        return np.column_stack([np.cos(th), np.sin(th)])
    if d == 3:
        z = 1.0 - (2 * j + 1) / n
        phi = j * math.pi * (3.0 - math.sqrt(5.0))
        rho = np.sqrt(1.0 - z * z)
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    u = qmc.Halton(d, scramble=False).random(n + 1)[1:]
    g = stats.norm.ppf(u)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sphere_quadrature_size(d: int, radius: float, spacing: float) -> int:
    return max(64, math.ceil(4 * math.pi * radius / spacing) ** (d - 1))


def _check_sphere(grid: GridSpec, center, radius: float) -> np.ndarray:
    center = np.asarray(center, dtype=np.float64).reshape(-1)
    if center.size == 1 and grid.dimension_d > 1:
        center = np.full(grid.dimension_d, float(center[0]))
    if center.size != grid.dimension_d:
        raise FieldError(f"center has {center.size} coordinates, grid is {grid.dimension_d}-d")
    if radius < 2 * grid.spacing:
        raise FieldError(f"sphere radius {radius:g} under-resolved (< 2 x spacing {grid.spacing:g})")
    if np.max(np.abs(center)) + radius > grid.box_size / 2 + 1e-12:
        raise FieldError(f"sphere of radius {radius:g} around {center.tolist()} leaves the box")
    return center


def sphere_average(sample: FieldSample, center, radius: float, n_quad: int | None = None) -> float:
    """Average of the multilinear interpolant over a sphere."""
    grid = sample.grid
    center = _check_sphere(grid, center, radius)
    if n_quad is None:
        n_quad = sphere_quadrature_size(grid.dimension_d, radius, grid.spacing)
    pts = center + radius * sphere_points(grid.dimension_d, n_quad)
    coords = pts.T / grid.spacing + grid.n_per_axis // 2
    vals = ndimage.map_coordinates(sample.values, coords, order=1, mode="grid-wrap")
    return float(np.mean(vals))


def sphere_average_field(sample: FieldSample, radius: float) -> np.ndarray:
    """Sphere averages of the band-limited interpolant around every site."""
    grid = sample.grid
    if radius < 2 * grid.spacing:
        raise FieldError(f"sphere radius {radius:g} under-resolved (< 2 x spacing {grid.spacing:g})")
    mult = radial_bessel(grid.dimension_d, 2 * math.pi * radius * grid.rfreq_radii())
    return _irfft(_rfft(sample.values) * mult, s=grid.shape)


def anchor_field(sample: FieldSample, center=None, radius: float = 1.0) -> FieldSample:
    """Subtract the sphere average so that ``h_radius(center) = 0``."""
    grid = sample.grid
    center = np.zeros(grid.dimension_d) if center is None else np.asarray(center, dtype=np.float64)
    anchor = Anchor(tuple(float(c) for c in center), float(radius))
    if sample.anchor == anchor:
        return sample
    avg = sphere_average(sample, center, radius)
    return sample.with_values(sample.values - avg, anchor=anchor)


# --------------------------------------------------------------------------- samplers


def layer_edges(epsilon: float, R: float, per_octave: int = 4) -> np.ndarray:
    """Geometric scale edges ``eps * 2^(k/per_octave)`` capped at ``R``."""
    if not 0 < epsilon < R:
        raise FieldError(f"need 0 < epsilon < R, got epsilon={epsilon}, R={R}")
    n = math.ceil(per_octave * math.log2(R / epsilon) - 1e-9)
    edges = epsilon * 2.0 ** (np.arange(n + 1) / per_octave)
    edges[-1] = R
    return edges


@dataclass(frozen=True, eq=False)
class LayerStack:
    t_edges: np.ndarray
    t_mid: np.ndarray
    weights: np.ndarray
    layers: list
    epsilon_bottom: float
    R_top: float

    @property
    def t_layers(self) -> np.ndarray:
        """Layer scales, largest first."""
        return self.t_mid[::-1]


@functools.lru_cache(maxsize=8)
def _layer_filters(grid: GridSpec, epsilon: float, R: float, bump: BumpProfile, per_octave: int):
    d, h = grid.dimension_d, grid.spacing
    edges = layer_edges(epsilon, R, per_octave)
    t_mid = np.sqrt(edges[:-1] * edges[1:])
    # Scale weight t_m * dlog t makes each layer's variance exactly log(t_{k+1}/t_k).
    weights = t_mid * np.log(edges[1:] / edges[:-1])
    radii = grid.offset_radii()
    filters = []
    for t, w in zip(t_mid, weights):
        amp = t ** (-(d + 1) / 2) * math.sqrt(w) * h ** (d / 2)
        filters.append(_rfft(bump(radii / t) * amp))
    return edges, t_mid, weights, filters


def _check_white_noise(grid: GridSpec, epsilon: float, R: float) -> None:
    if epsilon < 2 * grid.spacing:
        raise FieldError(f"epsilon={epsilon:g} under-resolved: need epsilon >= 2 x spacing = {2 * grid.spacing:g}")
    if R > grid.box_size / 4:
        raise FieldError(f"R={R:g} exceeds L/4 = {grid.box_size / 4:g}; periodization not controlled")


def sample_layers(grid: GridSpec, epsilon: float, R: float, bump: BumpProfile, seed: int,
                  per_octave: int = 4) -> LayerStack:
    """Each scale layer of the white-noise field as its own array."""
    _check_white_noise(grid, epsilon, R)
    edges, t_mid, weights, filters = _layer_filters(grid, float(epsilon), float(R), bump, per_octave)
    layers = []
    for k, filt in enumerate(filters):
        noise = gaussian_grid(seed, grid.shape, _WHITE_NOISE_TAG, k)
        layers.append(_irfft(_rfft(noise) * filt, s=grid.shape))
    return LayerStack(edges, t_mid, weights, layers, float(epsilon), float(R))


def sample_white_noise_field(grid: GridSpec, epsilon: float, R: float, bump: BumpProfile, seed: int,
                             per_octave: int = 4) -> FieldSample:
    """Layered white-noise field with covariance approximating ``kappa_{eps,R}``.

    Layer ``k`` uses its own noise stream, so a field on ``[eps, R]`` shares its
    layers with any other field of the same grid, seed and layer edges.
    """
    _check_white_noise(grid, epsilon, R)
    edges, t_mid, weights, filters = _layer_filters(grid, float(epsilon), float(R), bump, per_octave)
    acc = None
    for k, filt in enumerate(filters):
        term = _rfft(gaussian_grid(seed, grid.shape, _WHITE_NOISE_TAG, k)) * filt
        acc = term if acc is None else acc + term
    values = _irfft(acc, s=grid.shape)
    return FieldSample(grid, values, float(epsilon), "white_noise_layers", int(seed),
                       meta={"R": float(R), "n_layers": len(filters), "bump": bump.name})


@functools.lru_cache(maxsize=8)
def _lgf_amplitude(grid: GridSpec, exponent: float) -> np.ndarray:
    d = grid.dimension_d
    k = grid.rfreq_radii()
    c_d = DimensionConstants.for_dimension(d).c_d
    with np.errstate(divide="ignore"):
        amp = np.sqrt(grid.n_sites * c_d * k ** (-exponent) / grid.box_size**d)
    amp.flat[0] = 0.0
    return amp


def sample_spectral_lgf(grid: GridSpec, seed: int, *, anchor: bool = True, anchor_radius: float = 1.0,
                        spectral_exponent: float | None = None) -> FieldSample:
    """Torus log-correlated field with spectral density ``c_d |k|^-d`` and no zero mode.

    ``spectral_exponent`` replaces ``d`` in the density; only meant for
    negative controls.  With ``anchor`` the field is shifted so that its unit
    sphere average around the origin vanishes.
    """
    exponent = float(grid.dimension_d if spectral_exponent is None else spectral_exponent)
    noise = gaussian_grid(seed, grid.shape, _SPECTRAL_TAG)
    values = _irfft(_rfft(noise) * _lgf_amplitude(grid, exponent), s=grid.shape)
    sample = FieldSample(grid, values, 0.0, "spectral", int(seed),
                         meta={} if spectral_exponent is None else {"spectral_exponent": exponent})
    if anchor:
        sample = anchor_field(sample, radius=anchor_radius)
    return sample


# --------------------------------------------------------------------------- mollification


def _check_kernel(grid: GridSpec, kernel: RadialKernel) -> None:
    if kernel.dimension_d != grid.dimension_d:
        raise FieldError(f"kernel is {kernel.dimension_d}-d, grid is {grid.dimension_d}-d")
    if kernel.epsilon < 2 * grid.spacing:
        raise FieldError(f"kernel epsilon={kernel.epsilon:g} under-resolved: need >= {2 * grid.spacing:g}")


@functools.lru_cache(maxsize=16)
def _kernel_multiplier(grid: GridSpec, kernel: RadialKernel) -> np.ndarray:
    return kernel.spectrum(grid.rfreq_radii())


def kernel_tail_mass(kernel: RadialKernel, radius: float) -> float:
    """``int_{|x| > radius} |K|``: the kernel mass the torus wraps around."""
    d = kernel.dimension_d
    r = kernel.radius_grid
    keep = r >= radius
    total = 0.0
    if np.count_nonzero(keep) > 1:
        rr = np.concatenate([[radius], r[keep]]) if r[keep][0] > radius else r[keep]
        total += np.trapezoid(np.abs(kernel(rr)) * rr**d, np.log(rr))
    end = max(radius, float(r[-1]))
    total += sum(abs(c) * end ** (d - p) / (p - d) for p, c in zip(kernel.tail_powers, kernel.tail_coeffs))
    return float(surface_area(d) * total)


def mollify(sample: FieldSample, kernel: RadialKernel) -> FieldSample:
    """Torus convolution with ``K_eps`` through its exact spectrum."""
    grid = sample.grid
    _check_kernel(grid, kernel)
    out = _irfft(_rfft(sample.values) * _kernel_multiplier(grid, kernel), s=grid.shape)
    meta = dict(sample.meta, tail_mass_beyond_half_box=kernel_tail_mass(kernel, grid.box_size / 2))
    return sample.with_values(out, epsilon=kernel.epsilon, anchor=None, meta=meta)


def smooth_step(r, inner: float, outer: float) -> np.ndarray:
    """C-infinity radial cutoff: 1 on ``r <= inner``, 0 on ``r >= outer``."""
    r = np.asarray(r, dtype=np.float64)
    t = np.clip((outer - r) / (outer - inner), 0.0, 1.0)

    def f(x):
        with np.errstate(divide="ignore"):
            return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    a, b = f(t), f(1.0 - t)
    return a / (a + b)


def truncation_radii(epsilon: float, mode: str) -> tuple[float, float]:
    if mode == "bar_sqrt_eps":
        outer = math.sqrt(epsilon)
    elif mode == "hat_log_power":
        outer = epsilon * math.log(1.0 / epsilon) ** 10
    else:
        raise FieldError(f"unknown truncation mode {mode!r}")
    return outer / 2, outer


def truncated_mass(kernel: RadialKernel, inner: float, outer: float, n: int = 8192) -> float:
    """``int smooth_step(|x|) K(|x|) dx`` over the whole space."""
    d = kernel.dimension_d
    r0 = float(kernel.radius_grid[0])
    if inner <= r0:
        raise FieldError("truncation radius below the kernel tabulation")
    # Kernel mass outside the inner radius, weighted by 1 - step, subtracted from the total.
    r = np.geomspace(inner, outer, n)
    cut = np.trapezoid((1.0 - smooth_step(r, inner, outer)) * kernel(r) * r**d, np.log(r))
    far = 0.0
    r_end = float(kernel.radius_grid[-1])
    if outer < r_end:
        rr = np.geomspace(outer, r_end, n)
        far += np.trapezoid(kernel(rr) * rr**d, np.log(rr))
    far += sum(c * max(outer, r_end) ** (d - p) / (p - d) for p, c in zip(kernel.tail_powers, kernel.tail_coeffs))
    return float(kernel.mass - surface_area(d) * (cut + far))


def truncated_mollify(sample: FieldSample, kernel: RadialKernel, mode: str = "bar_sqrt_eps") -> FieldSample:
    """Mollification with the kernel cut off smoothly at a scale above ``eps``.

    ``bar_sqrt_eps`` cuts between ``sqrt(eps)/2`` and ``sqrt(eps)``;
    ``hat_log_power`` cuts between ``eps log(1/eps)^10 / 2`` and twice that and
    divides by the truncated mass ``Z``.  Computed as the full mollification
    plus the convolution with ``(step - 1) K`` at minimum-image offsets, which
    vanishes identically when the cutoff covers the torus.
    """
    grid = sample.grid
    _check_kernel(grid, kernel)
    inner, outer = truncation_radii(kernel.epsilon, mode)
    if outer < 2 * grid.spacing:
        raise FieldError(f"truncation radius {outer:g} under-resolved (< 2 x spacing)")
    base = mollify(sample, kernel)
    radii = grid.offset_radii()
    correction = (smooth_step(radii, inner, outer) - 1.0) * kernel(radii)
    values = base.values
    if np.any(correction != 0.0):
        conv = _irfft(_rfft(sample.values) * _rfft(correction), s=grid.shape)
        values = values + conv * grid.spacing**grid.dimension_d
    z = 1.0
    if mode == "hat_log_power":
        z = truncated_mass(kernel, inner, outer)
        values = values / z
    meta = dict(base.meta, mode=mode, Z_eps=z, inner_radius=inner, outer_radius=outer)
    return base.with_values(values, meta=meta)


# --------------------------------------------------------------------------- scale invariance


@dataclass(frozen=True)
class RescaleReport:
    r: float
    probe_radius: float
    pairs: list
    ks_statistics: list
    p_values: list
    alpha: float
    passed: bool
    n_samples: int


def _default_pairs(grid: GridSpec) -> list:
    L = grid.box_size
    base = [((0.0, 0.0), (L / 16, 0.0)), ((0.0, 0.0), (0.0, L / 8)), ((L / 16, 0.0), (-L / 16, L / 16)),
            ((-L / 32, -L / 32), (L / 16, L / 32)), ((0.0, L / 32), (L / 8, -L / 16))]
    pad = (0.0,) * (grid.dimension_d - 2)
    return [(a + pad, b + pad) for a, b in base]


def rescale_field_check(ensemble: Sequence[FieldSample], r: float, *, pairs=None,
                        probe_radius: float | None = None, alpha: float = 1e-3) -> RescaleReport:
    """Two-sample KS tests of ``h_s(x) - h_s(y)`` against ``h_{rs}(rx) - h_{rs}(ry)``.

    Sphere averages at radius ``s`` stand in for point values so that both
    sides see the same relative resolution.  Pass requires every p-value to
    exceed ``alpha / len(pairs)``.
    """
    if len(ensemble) < 200:
        raise FieldError(f"rescale check needs >= 200 samples, got {len(ensemble)}")
    if not 0 < r <= 1:
        raise FieldError("r must lie in (0, 1]")
    grid = ensemble[0].grid
    pairs = _default_pairs(grid) if pairs is None else pairs
    s = 4 * grid.spacing / r if probe_radius is None else probe_radius
    if r * s < 2 * grid.spacing:
        raise FieldError(f"rescaled probe radius {r * s:g} under-resolved")
    sites = [[grid.site_of(np.asarray(p) * scale) for p in pair] for pair in pairs for scale in (1.0, r)]
    a = np.empty((len(ensemble), len(pairs)))
    b = np.empty_like(a)
    for i, sample in enumerate(ensemble):
        coarse = sphere_average_field(sample, s)
        fine = coarse if r == 1 else sphere_average_field(sample, r * s)
        for j in range(len(pairs)):
            (x, y), (rx, ry) = sites[2 * j], sites[2 * j + 1]
            a[i, j] = coarse[x] - coarse[y]
            b[i, j] = fine[rx] - fine[ry]
    res = [stats.ks_2samp(a[:, j], b[:, j]) for j in range(len(pairs))]
    pvals = [float(t.pvalue) for t in res]
    return RescaleReport(float(r), float(s), [list(map(list, p)) for p in pairs],
                         [float(t.statistic) for t in res], pvals, alpha,
                         bool(min(pvals) > alpha / len(pairs)), len(ensemble))
