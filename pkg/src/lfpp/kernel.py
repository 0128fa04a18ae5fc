"""Mollification kernels built from a seed bump.

The seed bump ``b`` is radial, compactly supported, smooth and has unit L2 norm.
Everything else is derived from its radial Fourier transform ``b^`` (convention
``exp(-2 pi i x.k)``):

* ``kappa_hat(eps)(k) = int_eps^inf t^(d-1) |b^(t k)|^2 dt``, the spectrum of the
  white-noise field built from layers ``t > eps``;
* ``K_eps^(k) = sqrt(S_d |k|^d kappa_hat(eps)(k))`` with ``S_d = 2 pi^(d/2) / Gamma(d/2)``,
  the Fourier transform of the mollifier whose convolution with a
  log-correlated field has the same law as that white-noise field;
* ``kappa_{eps,R}(x)``, the covariance of the layers ``eps < t < R``.

All of these reduce to one-dimensional integrals of the tail energy
``E(a) = int_a^inf s^(d-1) |b^(s)|^2 ds`` because ``|k|^d kappa_hat(eps)(k) = E(eps |k|)``.
"""

from __future__ import annotations

import functools
import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import interpolate, special

from .errors import ValidationError

# Frequency span and step of the tabulated bump spectrum (unit-support bump).
SPECTRUM_SMAX = 128.0
SPECTRUM_STEP = 1.0 / 256.0
# Kernel radii (in units of eps) evaluated by quadrature; beyond this the
# tabulation uses the analytic tail.
KERNEL_NUMERIC_SPAN = 100.0
# Below this argument E is differenced from the head integral instead of the tail.
_HEAD_SPLIT = 1.0

_GL_ORDER = 10
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


class KernelError(ValidationError):
    """Invalid bump, kernel or transform input."""


class HankelConvergenceError(KernelError):
    """Quadrature tail estimate above tolerance."""

    def __init__(self, message: str, tail_bound: float):
        super().__init__(f"{message} (tail bound {tail_bound:.3e})")
        self.tail_bound = tail_bound


def surface_area(d: int) -> float:
    """Area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class DimensionConstants:
    dimension_d: int
    c_d: float
    surface_factor: float

    @classmethod
    def for_dimension(cls, d: int) -> "DimensionConstants":
        if d < 2:
            raise KernelError(f"dimension must be >= 2, got {d}")
        return cls(d, math.gamma(d / 2) / (2.0 * math.pi ** (d / 2)), surface_area(d))


def radial_bessel(d: int, z) -> np.ndarray:
    """Spherical mean of ``exp(i z e.u)`` over unit vectors ``u`` in R^d.

    Equals ``Gamma(d/2) (z/2)^(1-d/2) J_{d/2-1}(z)``; 1 at the origin.
    """
    z = np.asarray(z, dtype=np.float64)
    if d == 2:
        return special.j0(z)
    if d == 3:
        return np.sinc(z / math.pi)
    nu = d / 2 - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = math.gamma(d / 2) * (z / 2) ** (-nu) * special.jv(nu, z)
    return np.where(z == 0, 1.0, out)


def _panel_nodes(r_max: float, width: float, breakpoints: Sequence[float] | None = None):
    """Gauss-Legendre nodes/weights on [0, r_max] with panels no wider than ``width``."""
    edges = [0.0, r_max]
    if breakpoints is not None:
        edges.extend(b for b in breakpoints if 0.0 < b < r_max)
    edges = np.unique(np.asarray(edges, dtype=np.float64))
    lengths = np.diff(edges)
    counts = np.maximum(1, np.ceil(lengths / width - 1e-9)).astype(np.int64)
    starts = np.repeat(edges[:-1], counts)
    steps = np.repeat(lengths / counts, counts)
    starts = starts + steps * (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
    nodes = (starts[:, None] + steps[:, None] * (_GL_X[None, :] + 1.0) / 2.0).ravel()
    weights = (steps[:, None] * _GL_W[None, :] / 2.0).ravel()
    return nodes, weights


@dataclass(frozen=True, eq=False)
class RadialSpectrum:
    """Tabulated radial function of frequency."""

    freq_grid: np.ndarray
    values: np.ndarray
    dimension_d: int
    tail_bound: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise KernelError("spectrum values must be finite reals")

    @functools.cached_property
    def _spline(self):
        return interpolate.CubicSpline(self.freq_grid, self.values)

    def __call__(self, freqs) -> np.ndarray:
        freqs = np.abs(np.asarray(freqs, dtype=np.float64))
        out = np.zeros_like(freqs)
        inside = freqs <= self.freq_grid[-1]
        out[inside] = self._spline(freqs[inside])
        return out

    # Lets a spectrum be fed back into hankel_transform (radial FT is self-inverse).
    @property
    def radius_grid(self) -> np.ndarray:
        return self.freq_grid


def _as_radial_callable(profile, r_max):
    if isinstance(profile, tuple):
        grid, values = (np.asarray(a, dtype=np.float64) for a in profile)
        spline = interpolate.CubicSpline(grid, values)

        def func(r):
            r = np.asarray(r)
            out = np.zeros_like(r)
            inside = r <= grid[-1]
            out[inside] = spline(r[inside])
            return out

        return func, float(grid[-1]) if r_max is None else r_max
    if hasattr(profile, "radius_grid") and hasattr(profile, "values"):
        if r_max is None:
            r_max = float(getattr(profile, "support_radius", profile.radius_grid[-1]))
        return profile, r_max
    if callable(profile):
        if r_max is None:
            raise KernelError("a callable profile needs an explicit r_max")
        return profile, r_max
    raise KernelError(f"unsupported radial profile {type(profile).__name__}")


def hankel_transform(profile, d: int, freq_grid, *, r_max: float | None = None,
                     breakpoints: Sequence[float] | None = None, tol: float = 1e-10,
                     chunk: int = 16) -> RadialSpectrum:
    """d-dimensional Fourier transform of a radial function.

    ``profile`` is a callable of the radius (with ``r_max``), a ``(radius_grid,
    values)`` tabulation, or any object with ``radius_grid``/``values`` that is
    callable (``BumpProfile``, ``RadialKernel``, ``RadialSpectrum``).  The integral
    ``S_d int_0^r_max f(r) Lambda_d(2 pi k r) r^(d-1) dr`` is done with Gauss-Legendre
    panels narrow enough to resolve the oscillation at each frequency.

    Raises HankelConvergenceError when the profile is not negligible at ``r_max``.
    """
    if d < 2:
        raise KernelError(f"dimension must be >= 2, got {d}")
    func, r_max = _as_radial_callable(profile, r_max)
    freqs = np.abs(np.asarray(freq_grid, dtype=np.float64))
    flat = freqs.ravel()
    surf = surface_area(d)

    # Tail estimate: the value at r_max extended as a constant to a ball of
    # twice the radius.
    edge_mag = float(np.abs(func(np.array([r_max]))[0]))
    tail = surf * edge_mag * ((2 * r_max) ** d - r_max**d) / d

    base_width = r_max / 256.0
    out = np.empty_like(flat)
    order = np.argsort(flat, kind="stable")
    for start in range(0, flat.size, chunk):
        idx = order[start:start + chunk]
        fmax = flat[idx].max()
        width = base_width if fmax == 0 else min(base_width, 1.0 / (2.0 * fmax))
        nodes, weights = _panel_nodes(r_max, width, breakpoints)
        wf = weights * func(nodes) * nodes ** (d - 1) * surf
        out[idx] = radial_bessel(d, 2 * math.pi * np.outer(flat[idx], nodes)) @ wf
    scale = max(1.0, float(np.max(np.abs(out)))) if out.size else 1.0
    if tail > tol * scale:
        raise HankelConvergenceError(f"profile not negligible at r_max={r_max:g}", tail)
    return RadialSpectrum(freqs.reshape(np.shape(freq_grid)), out.reshape(freqs.shape), d, tail)


# --------------------------------------------------------------------------- bumps


def _standard_bump(r, power: float = 1.0):
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2) ** power)
    return out


def _radial_moment(func, d: int, radius: float, power: int, n_panels: int = 64) -> float:
    nodes, weights = _panel_nodes(radius, radius / n_panels)
    return surface_area(d) * float(np.sum(weights * func(nodes) * nodes ** (d - 1 + power)))


@dataclass(frozen=True, eq=False)
class BumpProfile:
    """Radial seed bump tabulated on ``radius_grid`` and evaluable exactly."""

    radius_grid: np.ndarray
    values: np.ndarray
    support_radius: float
    dimension_d: int
    shape: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    scale: float = 1.0
    name: str = "custom"

    def __call__(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=np.float64))
        return self.scale * np.where(r < self.support_radius, self.shape(r), 0.0)

    @classmethod
    def from_function(cls, shape, d: int, support_radius: float = 1.0, *,
                      normalize: bool = True, name: str = "custom", n_grid: int = 2049) -> "BumpProfile":
        if d < 2:
            raise KernelError(f"dimension must be >= 2, got {d}")
        scale = 1.0
        if normalize:
            norm = _radial_moment(lambda r: np.where(r < support_radius, shape(r), 0.0) ** 2,
                                  d, support_radius, 0)
            scale = 1.0 / math.sqrt(norm)
        grid = np.linspace(0.0, support_radius, n_grid)
        values = scale * np.where(grid < support_radius, shape(grid), 0.0)
        return cls(grid, values, float(support_radius), d, shape, scale, name)

    @classmethod
    def canonical(cls, d: int) -> "BumpProfile":
        """``c exp(-1/(1-r^2))`` on the unit ball, unit L2 norm."""
        return _named_bump("standard", d, 1.0)

    @classmethod
    def gevrey(cls, d: int, power: float = 2.0) -> "BumpProfile":
        """``c exp(-1/(1-r^2)^power)`` on the unit ball, unit L2 norm."""
        return _named_bump("gevrey", d, float(power))

    @functools.cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.name}|{self.dimension_d}|{self.support_radius!r}|{self.scale!r}".encode())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()

    def l2_norm_sq(self) -> float:
        return _radial_moment(lambda r: self(r) ** 2, self.dimension_d, self.support_radius, 0)

    def moment(self, power: int) -> float:
        """``int |x|^power b(x) dx``."""
        return _radial_moment(self, self.dimension_d, self.support_radius, power)

    def check(self, tol: float = 1e-8) -> None:
        """Raise KernelError unless the bump is admissible."""
        if np.any(self.radius_grid < 0) or self.support_radius <= 0:
            raise KernelError("radius grid must be nonnegative and support positive")
        outside = self.radius_grid >= self.support_radius
        if np.any(self.values[outside] != 0.0):
            raise KernelError("bump values must vanish at and beyond the support radius")
        norm = self.l2_norm_sq()
        if abs(norm - 1.0) > tol:
            raise KernelError(
                f"bump normalization violated: integral of bump^2 over R^{self.dimension_d} "
                f"is {norm:.6f}, expected 1")
        step = np.diff(self.radius_grid)
        second = np.diff(self.values, 2) / (step[1:] * step[:-1])
        if not np.all(np.isfinite(second)) or np.max(np.abs(second)) > 1e4 * max(1.0, np.max(np.abs(self.values))):
            raise KernelError("bump is not smooth at sample resolution")


@functools.lru_cache(maxsize=None)
def _named_bump(kind: str, d: int, power: float) -> BumpProfile:
    if kind == "standard":
        return BumpProfile.from_function(_standard_bump, d, 1.0, name="standard")
    return BumpProfile.from_function(lambda r: _standard_bump(r, power), d, 1.0,
                                     name=f"gevrey{power:g}")


def named_bump(name: str, d: int) -> BumpProfile:
    """Bump by config name: ``standard`` or ``gevrey<power>``."""
    if name == "standard":
        return BumpProfile.canonical(d)
    if name.startswith("gevrey"):
        try:
            power = float(name[len("gevrey"):] or 2.0)
        except ValueError:
            raise KernelError(f"unknown bump {name!r}") from None
        return BumpProfile.gevrey(d, power)
    raise KernelError(f"unknown bump {name!r}; expected 'standard' or 'gevrey<power>'")


# --------------------------------------------------------------------------- energy


class _TailEnergy:
    """Piecewise-cubic integrals of ``s^(d-1) |b^(s)|^2``.

    ``tail(a) = int_a^smax``, ``head(a) = int_0^a``; sums run from the far end
    so small tails keep their relative precision.
    """

    def __init__(self, spectrum: RadialSpectrum):
        s = spectrum.freq_grid
        if s[0] != 0.0 or not np.allclose(np.diff(s), s[1] - s[0]):
            raise KernelError("bump spectrum must be tabulated on a uniform grid from 0")
        d = spectrum.dimension_d
        self.d = d
        self.s = s
        self.step = float(s[1] - s[0])
        self.s_max = float(s[-1])
        dens = s ** (d - 1) * spectrum.values**2
        self.coef = interpolate.CubicSpline(s, dens).c  # (4, n-1)
        h = self.step
        cells = sum(self.coef[m] * h ** (4 - m) / (4 - m) for m in range(4))
        self.cells = cells
        self.head_knots = np.concatenate([[0.0], np.cumsum(cells)])
        self.tail_knots = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
        self.total = float(self.tail_knots[0])
        top = s >= 0.75 * self.s_max
        self.tail_const = float(np.max(np.abs(spectrum.values[top]) * s[top] ** (d + 1)))

    def _partial(self, a):
        k = np.clip((a / self.step).astype(np.int64), 0, self.cells.size - 1)
        x = a - self.s[k]
        part = sum(self.coef[m, k] * x ** (4 - m) / (4 - m) for m in range(4))
        return k, part

    def tail(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        out = np.zeros_like(a)
        inside = a < self.s_max
        k, part = self._partial(a[inside])
        out[inside] = self.tail_knots[k + 1] + (self.cells[k] - part)
        return out

    def head(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        out = np.full_like(a, self.total)
        inside = a < self.s_max
        k, part = self._partial(a[inside])
        out[inside] = self.head_knots[k] + part
        return out

    def between(self, a, b) -> np.ndarray:
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
        small = b <= _HEAD_SPLIT
        return np.where(small, self.head(b) - self.head(a), self.tail(a) - self.tail(b))

    def tail_bound(self, a) -> np.ndarray:
        """Bound on the energy beyond ``max(a, s_max)`` from ``|b^(s)| <= C s^-(d+1)``."""
        m = np.maximum(np.asarray(a, dtype=np.float64), self.s_max)
        return self.tail_const**2 * m ** (-self.d - 2) / (self.d + 2)


_SPECTRA: dict[tuple, RadialSpectrum] = {}


def _cache_dir() -> Path | None:
    root = os.environ.get("LFPP_CACHE_DIR")
    return Path(root) if root else None


def bump_spectrum(bump: BumpProfile, s_max: float | None = None, step: float | None = None) -> RadialSpectrum:
    """Fourier transform of the bump on the uniform grid used for energy tables.

    Results are memoized by bump digest, and persisted under ``$LFPP_CACHE_DIR``
    when that variable is set.
    """
    scale = bump.support_radius
    s_max = float(SPECTRUM_SMAX / scale if s_max is None else s_max)
    step = float(SPECTRUM_STEP / scale if step is None else step)
    key = (bump.digest, s_max, step)
    if key in _SPECTRA:
        return _SPECTRA[key]
    s = np.arange(0.0, s_max + step / 2, step)
    cache = _cache_dir()
    path = None
    if cache is not None:
        tag = hashlib.sha256(repr(key).encode()).hexdigest()[:24]
        path = cache / f"spectrum-{tag}.npy"
    if path is not None and path.exists():
        values = np.load(path)
        spec = RadialSpectrum(s, values, bump.dimension_d)
    else:
        spec = hankel_transform(bump, bump.dimension_d, s, r_max=bump.support_radius)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".{os.getpid()}.tmp")
            with open(tmp, "wb") as fh:
                np.save(fh, spec.values)
            os.replace(tmp, path)
    _SPECTRA[key] = spec
    return spec


@functools.lru_cache(maxsize=32)
def _energy(spectrum: RadialSpectrum) -> _TailEnergy:
    return _TailEnergy(spectrum)


def kappa_hat(epsilon: float, bump_spectrum: RadialSpectrum, freqs=None, *,
              R: float | None = None, rtol: float = 1e-10) -> RadialSpectrum:
    """White-noise spectrum ``int_eps^R t^(d-1) |b^(t k)|^2 dt`` (``R=None`` means infinity).

    Evaluated as ``k^-d (E(eps k) - E(R k))`` after substituting ``s = t k``.
    """
    if epsilon <= 0:
        raise KernelError("epsilon must be positive")
    if R is not None and R <= epsilon:
        raise KernelError(f"need R > epsilon, got R={R}, epsilon={epsilon}")
    energy = _energy(bump_spectrum)
    d = energy.d
    if freqs is None:
        freqs = bump_spectrum.freq_grid[1:] / epsilon
    k = np.abs(np.asarray(freqs, dtype=np.float64))
    zero = k == 0
    if np.any(zero) and R is None:
        raise KernelError("kappa_hat at zero frequency diverges without an R truncation")
    kk = np.where(zero, 1.0, k)
    lo = epsilon * kk
    if R is None:
        integral = energy.tail(lo)
        bound = energy.tail_bound(lo)
    else:
        hi = R * kk
        integral = energy.between(lo, hi)
        bound = np.where(hi > energy.s_max, energy.tail_bound(lo), 0.0)
    values = integral / kk**d
    if np.any(zero):
        b0 = float(bump_spectrum.values[0])
        values = np.where(zero, b0**2 * (R**d - epsilon**d) / d, values)
    bad = (bound > rtol * np.abs(integral)) & ~zero
    if np.any(bad):
        worst = float(np.max(bound[bad]))
        raise HankelConvergenceError(
            f"energy tail not certified at eps*k >= {float(np.min(lo[bad])):.3g}", worst)
    return RadialSpectrum(k, values, d, float(np.max(bound)) if bound.size else 0.0)


# --------------------------------------------------------------------------- kernel


@dataclass(frozen=True, eq=False)
class RadialKernel:
    """Tabulated mollifier ``K_eps`` with its exact spectrum."""

    epsilon: float
    radius_grid: np.ndarray
    values: np.ndarray
    dimension_d: int
    mass: float
    decay_constant: float
    tail_powers: tuple[float, ...]
    tail_coeffs: tuple[float, ...]
    bump: BumpProfile = field(repr=False)

    @functools.cached_property
    def _spline(self):
        return interpolate.CubicSpline(np.log(self.radius_grid), self.values)

    def __call__(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=np.float64))
        out = np.empty_like(r)
        lo, hi = self.radius_grid[0], self.radius_grid[-1]
        below, above = r < lo, r > hi
        mid = ~(below | above)
        out[below] = self.values[0]
        out[mid] = self._spline(np.log(r[mid]))
        out[above] = self.tail(r[above])
        return out

    def tail(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        for p, c in zip(self.tail_powers, self.tail_coeffs):
            out += c * r ** (-p)
        return out

    def spectrum(self, freqs) -> np.ndarray:
        """Exact ``K_eps^`` at the given frequency magnitudes."""
        return kernel_spectrum(self.epsilon, self.bump, freqs)

    @property
    def support_radius(self) -> float:
        return float(self.radius_grid[-1])


def kernel_spectrum(epsilon: float, bump: BumpProfile, freqs) -> np.ndarray:
    """``sqrt(S_d |k|^d kappa_hat(eps)(k))``, continuous at ``k = 0``."""
    energy = _energy(bump_spectrum(bump))
    sq = surface_area(bump.dimension_d) * energy.tail(epsilon * np.abs(np.asarray(freqs, dtype=np.float64)))
    if np.any(sq < -1e-12):
        raise KernelError(f"negative kernel spectrum square {float(sq.min()):.3e}")
    return np.sqrt(np.maximum(sq, 0.0))


def _tail_law(epsilon: float, bump: BumpProfile) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Leading large-|x| terms of ``K_eps`` from the |k|^d, |k|^(d+2) terms of its spectrum.

    Even d: those powers are polynomial, the kernel decays faster than any power
    and no tail is used.
    """
    d = bump.dimension_d
    if d % 2 == 0:
        return (), ()
    surf = surface_area(d)
    m0 = bump.moment(0)
    m2 = bump.moment(2)
    f0 = m0**2
    f1 = -(4 * math.pi**2 / d) * m0 * m2
    b0 = -surf * f0 * epsilon**d / (2 * d)
    b1 = -surf * f1 * epsilon ** (d + 2) / (2 * (d + 2))

    def inv(a):  # inverse FT of |k|^a is this constant times |x|^-(a+d)
        return math.gamma((a + d) / 2) / (math.pi ** (a + d / 2) * math.gamma(-a / 2))

    return (2.0 * d, 2.0 * d + 2), (b0 * inv(d), b1 * inv(d + 2))


@functools.lru_cache(maxsize=64)
def _build_kernel_cached(epsilon: float, bump: BumpProfile, n_nodes: int, lo: float, hi: float) -> RadialKernel:
    d = bump.dimension_d
    spec = bump_spectrum(bump)
    energy = _energy(spec)
    radii = epsilon * np.geomspace(lo, hi, n_nodes)
    values = np.zeros(n_nodes)
    numeric = radii <= KERNEL_NUMERIC_SPAN * epsilon
    freq_max = energy.s_max / epsilon

    def spectrum(k):
        return kernel_spectrum(epsilon, bump, k)

    values[numeric] = hankel_transform(spectrum, d, radii[numeric], r_max=freq_max).values
    powers, coeffs = _tail_law(epsilon, bump)
    tmp = RadialKernel(epsilon, radii, values, d, 0.0, 0.0, powers, coeffs, bump)
    values[~numeric] = tmp.tail(radii[~numeric])

    # Mass: log-grid trapezoid plus the ball below the grid and the analytic tail.
    surf = surface_area(d)
    integrand = values * radii**d
    mass = np.trapezoid(integrand, np.log(radii)) + values[0] * radii[0] ** d / d
    for p, c in zip(powers, coeffs):
        mass += c * radii[-1] ** (d - p) / (p - d)
    mass *= surf
    decay = float(np.max(radii ** (2 * d - 1) * np.abs(values)))
    return RadialKernel(float(epsilon), radii, values, d, float(mass), decay, powers, coeffs, bump)


def build_kernel(epsilon: float, bump: BumpProfile, *, n_nodes: int = 4096,
                 span: tuple[float, float] = (1e-4, 1e4)) -> RadialKernel:
    """Tabulate ``K_eps`` on ``n_nodes`` log-spaced radii spanning ``span * eps``."""
    if epsilon <= 0:
        raise KernelError("epsilon must be positive")
    bump.check()
    return _build_kernel_cached(float(epsilon), bump, int(n_nodes), float(span[0]), float(span[1]))


def kappa_exact(epsilon: float, R: float, x, bump: BumpProfile) -> float:
    """Covariance ``kappa_{eps,R}`` at offset ``x`` (vector or radius), via the spectrum."""
    if R <= epsilon:
        raise KernelError(f"need R > epsilon, got R={R}, epsilon={epsilon}")
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=np.float64))))
    d = bump.dimension_d
    spec = bump_spectrum(bump)
    energy = _energy(spec)
    b0 = float(spec.values[0])
    k_max = energy.s_max / epsilon

    def khat(k):
        k = np.asarray(k, dtype=np.float64)
        kk = np.where(k == 0, 1.0, k)
        vals = energy.between(epsilon * kk, R * kk) / kk**d
        return np.where(k == 0, b0**2 * (R**d - epsilon**d) / d, vals)

    breaks = np.geomspace(1e-3 / R, k_max, 400)
    width = k_max / 4096 if r == 0 else min(k_max / 4096, 1.0 / (2.0 * r))
    nodes, weights = _panel_nodes(k_max, width, breaks)
    integrand = khat(nodes) * nodes ** (d - 1) * radial_bessel(d, 2 * math.pi * r * nodes)
    return float(surface_area(d) * np.sum(weights * integrand))


def kappa_increment(epsilon: float, x, bump: BumpProfile, R: float | None = None) -> float:
    """``kappa(0) - kappa(x)`` for layers ``(eps, R)``; ``R=None`` is the full field."""
    if R is not None and R <= epsilon:
        raise KernelError(f"need R > epsilon, got R={R}, epsilon={epsilon}")
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=np.float64))))
    if r == 0:
        return 0.0
    d = bump.dimension_d
    energy = _energy(bump_spectrum(bump))
    k_max = energy.s_max / epsilon
    breaks = np.geomspace(1e-4 / r, k_max, 400)
    if R is not None:
        breaks = np.union1d(breaks, np.geomspace(1e-3 / R, k_max, 200))
    nodes, weights = _panel_nodes(k_max, min(k_max / 4096, 1.0 / (2.0 * r)), breaks)
    if R is None:
        khat = energy.tail(epsilon * nodes) / nodes**d
    else:
        khat = energy.between(epsilon * nodes, R * nodes) / nodes**d
    integrand = khat * nodes ** (d - 1) * (1.0 - radial_bessel(d, 2 * math.pi * r * nodes))
    return float(surface_area(d) * np.sum(weights * integrand))
