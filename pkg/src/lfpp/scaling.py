"""Estimators for distance exponents, moment tails, Hölder exponents,
thick-point dimensions and the KPZ relation."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csgraph

from .ensemble import EnsembleConfig, Realization, map_seeds, realize
from .errors import ValidationError
from .field import FieldSample, GridSpec, sphere_average, sphere_average_field
from .metric import (CouplingParams, ShellSpec, WeightGrid, across_distance, distance, median_distance)
from .rng import stream


class ScalingError(ValidationError):
    """Estimator precondition violated."""


# --------------------------------------------------------------------------- regression


@dataclass(frozen=True)
class ExponentFit:
    x_values: list
    y_values: list
    slope: float
    intercept: float
    stderr_slope: float
    r_squared: float
    meta: dict = field(default_factory=dict)

    @property
    def implied_xi_q(self) -> float:
        return 1.0 - self.slope


def linear_fit(x, y) -> ExponentFit:
    """Ordinary least squares ``y = slope x + intercept``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.ptp(x) == 0:
        raise ScalingError("degenerate regression: need at least two distinct x values")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    dof = x.size - 2
    se = float(math.sqrt(np.sum(resid**2) / dof / sxx)) if dof > 0 else float("nan")
    syy = np.sum((y - ym) ** 2)
    r2 = float(1.0 - np.sum(resid**2) / syy) if syy > 0 else 1.0
    return ExponentFit(x.tolist(), y.tolist(), slope, intercept, se, r2)


def fit_distance_exponent(medians: Sequence[tuple[float, float]], *, min_points: int = 4,
                          min_decades: float = 0.9) -> ExponentFit:
    """Slope of ``log a_eps`` against ``log eps``; estimates ``1 - xi Q``."""
    if len(medians) < min_points:
        raise ScalingError(f"need >= {min_points} epsilon values, got {len(medians)}")
    eps = np.array([m[0] for m in medians], dtype=np.float64)
    a = np.array([m[1] for m in medians], dtype=np.float64)
    if np.any(eps <= 0) or np.any(a <= 0):
        raise ScalingError("epsilons and medians must be positive")
    span = math.log10(eps.max() / eps.min())
    if span < min_decades - 1e-12:
        raise ScalingError(f"epsilon values span {span:.2f} decades, need >= {min_decades}")
    fit = linear_fit(np.log(eps), np.log(a))
    fit.meta.update(implied_xi_q=fit.implied_xi_q, epsilons=eps.tolist(), medians=a.tolist())
    return fit


# --------------------------------------------------------------------------- distance ensembles


def _point_distances(seed: int, config: EnsembleConfig, params: CouplingParams, epsilons, x, y) -> list:
    real = realize(config, seed, epsilons, params)
    grid = config.grid
    sx, sy = np.ravel_multi_index(grid.site_of(x), grid.shape), np.ravel_multi_index(grid.site_of(y), grid.shape)
    return [distance(real.weights[e], [sx], [sy], stencil=config.stencil).value for e in epsilons]


def distance_ensemble(config: EnsembleConfig, params: CouplingParams, epsilons: Sequence[float],
                      x=None, y=None) -> np.ndarray:
    """``D_eps(x, y)`` per seed (rows) and epsilon (columns); defaults to ``x = 0``, ``y = e_1``."""
    d = config.dimension
    x = np.zeros(d) if x is None else np.asarray(x, dtype=np.float64)
    y = np.eye(d)[0] if y is None else np.asarray(y, dtype=np.float64)
    fn = functools.partial(_point_distances, config=config, params=params, epsilons=tuple(epsilons),
                           x=tuple(x), y=tuple(y))
    return np.array(map_seeds(fn, config.seeds, config.threads))


def exponent_pipeline(config: EnsembleConfig, params: CouplingParams, epsilons: Sequence[float]) -> dict:
    """Median ``a_eps`` of ``D_eps(0, e_1)`` per epsilon and the fitted exponent."""
    vals = distance_ensemble(config, params, epsilons)
    meds = [median_distance(vals[:, j], seed=j) for j in range(len(epsilons))]
    fit = fit_distance_exponent([(e, m.median) for e, m in zip(epsilons, meds)])
    return {"epsilons": list(epsilons), "medians": [m.median for m in meds],
            "ci_low": [m.ci_low for m in meds], "ci_high": [m.ci_high for m in meds],
            "slope": fit.slope, "stderr_slope": fit.stderr_slope, "r_squared": fit.r_squared,
            "implied_xi_q": fit.implied_xi_q, "target_slope": 1.0 - params.xi_q, "fit": fit}


# --------------------------------------------------------------------------- c_r law


@dataclass(frozen=True)
class CrReport:
    r_list: list
    xi_q: float
    medians: list
    spread: float
    raw_distances: np.ndarray = field(repr=False)
    anchors: np.ndarray = field(repr=False)
    xi: float = 0.0

    def renormalized(self, xi_q: float) -> "CrReport":
        """Same samples, normalized with another ``xi Q`` (negative controls)."""
        return _cr_report(self.r_list, xi_q, self.xi, self.raw_distances, self.anchors)


def _cr_report(r_list, xi_q, xi, raw, anchors) -> CrReport:
    r = np.asarray(r_list, dtype=np.float64)
    norm = r[None, :] ** (-xi_q) * np.exp(-xi * anchors) * raw
    meds = np.median(norm, axis=0)
    return CrReport(list(map(float, r_list)), float(xi_q), meds.tolist(), float(meds.max() / meds.min()),
                    raw, anchors, float(xi))


def _cr_sample(seed: int, config: EnsembleConfig, params: CouplingParams, epsilon: float, r_list,
               x0, y0, flat: bool, shift: float):
    real = realize(config, seed, [epsilon], None, flat=flat)
    grid = config.grid
    h = real.field
    hm = real.mollified[epsilon]
    if shift:
        h = h.with_values(h.values + shift)
        hm = hm.with_values(hm.values + shift)
    wg = WeightGrid(grid, np.exp(params.xi * hm.values), params.xi, "cr")
    dist, anch = [], []
    for r in r_list:
        sx = np.ravel_multi_index(grid.site_of(np.asarray(x0) * r), grid.shape)
        sy = np.ravel_multi_index(grid.site_of(np.asarray(y0) * r), grid.shape)
        dist.append(distance(wg, [sx], [sy], stencil=config.stencil).value)
        anch.append(sphere_average(h, np.zeros(grid.dimension_d), r))
    return dist, anch


def check_c_r_scaling(params: CouplingParams, r_list: Sequence[float], config: EnsembleConfig,
                      epsilon: float, *, x0=None, y0=None, xi_q: float | None = None,
                      flat: bool = False, shift: float = 0.0) -> CrReport:
    """Medians of ``r^-xiQ exp(-xi h_r(0)) D(r x0, r y0)`` for each ``r``.

    ``flat`` replaces the field by zero (calibration); ``shift`` adds a
    constant to it, which must leave every normalized value unchanged.
    """
    grid = config.grid
    for r in r_list:
        if r <= 0 or abs(math.log2(r) - round(math.log2(r))) > 1e-12 or r > 1:
            raise ScalingError(f"r must be a power of 1/2, got {r}")
        if r * 1.0 < 8 * grid.spacing:
            raise ScalingError(f"r={r} under-resolved on spacing {grid.spacing}")
    d = grid.dimension_d
    x0 = -0.5 * np.eye(d)[0] if x0 is None else np.asarray(x0, dtype=np.float64)
    y0 = 0.5 * np.eye(d)[0] if y0 is None else np.asarray(y0, dtype=np.float64)
    fn = functools.partial(_cr_sample, config=config, params=params, epsilon=epsilon, r_list=tuple(r_list),
                           x0=tuple(x0), y0=tuple(y0), flat=flat, shift=shift)
    out = map_seeds(fn, config.seeds, config.threads)
    raw = np.array([o[0] for o in out])
    anchors = np.array([o[1] for o in out])
    return _cr_report(r_list, params.xi_q if xi_q is None else xi_q, params.xi, raw, anchors)


# --------------------------------------------------------------------------- moments


@dataclass(frozen=True)
class MomentReport:
    p_list: list
    moments: list
    moment_stderr: list
    half_ensemble_moments: list
    instability: list
    thresholds: list
    survival: list
    exceedances: list
    tail_slope: float
    superpolynomial_vs: float
    faster_than_reference: bool
    widened_uncertainty: bool
    n: int


def moment_tail_report(samples: Sequence[float], p_list: Sequence[float], *,
                       threshold_multipliers: Sequence[float] = (2.0, 4.0, 8.0),
                       reference_power: float = 6.0, min_size: int = 500,
                       min_exceedances: int = 20) -> MomentReport:
    """Empirical moments, their doubling-stability, and the survival tail.

    ``instability[i]`` is the ratio of the pth moment over the full ensemble to
    that over its first half; values far above 1 signal an infinite moment.
    The tail slope fits ``log P[X > A m]`` against ``log A`` at the given
    multiples of the median ``m``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < min_size:
        raise ScalingError(f"moment report needs >= {min_size} samples, got {x.size}")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ScalingError("samples must be positive and finite")
    half = x[: x.size // 2]
    mom, se, hm, inst = [], [], [], []
    for p in p_list:
        xp = x**p
        mom.append(float(xp.mean()))
        se.append(float(xp.std(ddof=1) / math.sqrt(x.size)))
        hm.append(float((half**p).mean()))
        inst.append(mom[-1] / hm[-1])
    med = float(np.median(x))
    thr = [m * med for m in threshold_multipliers]
    exc = [int(np.sum(x > t)) for t in thr]
    surv = [e / x.size for e in exc]
    usable = [i for i, e in enumerate(exc) if e > 0]
    widened = exc[-1] < min_exceedances
    if len(usable) >= 2:
        slope = linear_fit(np.log([threshold_multipliers[i] for i in usable]),
                           np.log([surv[i] for i in usable])).slope
        if len(usable) < len(thr):
            slope = -math.inf if slope < -reference_power else slope
    else:
        slope = -math.inf
    return MomentReport(list(map(float, p_list)), mom, se, hm, inst, thr, surv, exc, float(slope),
                        float(reference_power), bool(slope < -reference_power), bool(widened), int(x.size))


def _set_distance_sample(seed: int, config: EnsembleConfig, params: CouplingParams, epsilon: float):
    real = realize(config, seed, [epsilon], params)
    wg = real.weights[epsilon]
    grid = config.grid
    n = grid.n_per_axis
    c = n // 2
    quarter = n // 8
    # Two parallel segments of length L/4 at distance L/8.
    a = [np.ravel_multi_index((c - quarter // 2,) + (c + k,) + (c,) * (grid.dimension_d - 2), grid.shape)
         for k in range(-quarter, quarter + 1)]
    b = [np.ravel_multi_index((c + quarter // 2,) + (c + k,) + (c,) * (grid.dimension_d - 2), grid.shape)
         for k in range(-quarter, quarter + 1)]
    sa = np.ravel_multi_index(grid.site_of(np.zeros(grid.dimension_d)), grid.shape)
    sb = np.ravel_multi_index(grid.site_of(np.eye(grid.dimension_d)[0] * grid.box_size / 8), grid.shape)
    return (distance(wg, a, b, stencil=config.stencil).value,
            distance(wg, [sa], [sb], stencil=config.stencil).value)


def distance_moment_samples(config: EnsembleConfig, params: CouplingParams, epsilon: float) -> dict:
    """Set-to-set and point-to-point distances, each divided by its ensemble median."""
    fn = functools.partial(_set_distance_sample, config=config, params=params, epsilon=epsilon)
    out = np.array(map_seeds(fn, config.seeds, config.threads))
    return {"set_set": out[:, 0] / np.median(out[:, 0]), "point_point": out[:, 1] / np.median(out[:, 1])}


def moment_thresholds(params: CouplingParams) -> dict:
    """Upper ends of the finite-moment ranges for diameters and point distances."""
    d, g, dg = params.dimension_d, params.gamma, params.d_gamma
    return {"diameter": 2 * d * dg / g**2, "point_point": 2 * params.Q * dg / g}


# --------------------------------------------------------------------------- Hölder


@dataclass(frozen=True)
class HolderReport:
    separations: list
    exponents_min: float
    exponents_median: float
    exponents_max: float
    band: tuple
    median_in_band: bool
    n_pairs_per_scale: int
    exponents: np.ndarray = field(repr=False)


def holder_band(params: CouplingParams) -> tuple[float, float]:
    s = math.sqrt(2 * params.dimension_d)
    return params.xi * (params.Q - s), params.xi * (params.Q + s)


def _holder_sample(seed: int, config: EnsembleConfig, params: CouplingParams, epsilon: float,
                   levels: tuple, n_points: int, flat: bool):
    real = realize(config, seed, [epsilon], params, flat=flat)
    wg = real.weights[epsilon]
    grid = config.grid
    n, d = grid.n_per_axis, grid.dimension_d
    rng = stream(seed, 0x401D)
    span = n // 4
    base = rng.integers(n // 2 - span, n // 2 + span, size=(n_points, d))
    axes = rng.integers(0, d, size=n_points)
    graph = wg.graph(config.stencil)
    out = np.empty((n_points, len(levels)))
    for i in range(n_points):
        src = np.ravel_multi_index(tuple(base[i]), grid.shape)
        dist = csgraph.dijkstra(graph, indices=src)
        for j, k in enumerate(levels):
            tgt = base[i].copy()
            tgt[axes[i]] = (tgt[axes[i]] + k) % n
            out[i, j] = dist[np.ravel_multi_index(tuple(tgt), grid.shape)] * grid.spacing
    return out


def holder_exponent_estimate(params: CouplingParams, config: EnsembleConfig, epsilon: float, *,
                             levels: Sequence[int] = (4, 8, 16, 32), pairs_per_field: int = 10,
                             flat: bool = False, min_pairs: int = 100) -> HolderReport:
    """Per-pair slopes of ``log D(x, x + s e)`` against ``log s`` over dyadic ``s`` (in sites)."""
    if len(levels) < 3:
        raise ScalingError("need at least 3 dyadic separation scales")
    if pairs_per_field * len(config.seeds) < min_pairs:
        raise ScalingError(f"need >= {min_pairs} pairs per scale")
    fn = functools.partial(_holder_sample, config=config, params=params, epsilon=epsilon,
                           levels=tuple(levels), n_points=pairs_per_field, flat=flat)
    dists = np.concatenate(map_seeds(fn, config.seeds, config.threads))
    logs = np.log(np.asarray(levels, dtype=np.float64) * config.grid.spacing)
    xc = logs - logs.mean()
    slopes = (np.log(dists) - np.log(dists).mean(axis=1, keepdims=True)) @ xc / np.sum(xc**2)
    band = holder_band(params) if params.check_consistency else (float("nan"), float("nan"))
    med = float(np.median(slopes))
    return HolderReport([int(k) for k in levels], float(slopes.min()), med, float(slopes.max()), band,
                        bool(band[0] < med < band[1]), int(dists.shape[0]), slopes)


# --------------------------------------------------------------------------- thick points


@dataclass(frozen=True)
class ThickPointReport:
    alpha: float
    epsilon_probe: float
    window: float
    mask: np.ndarray = field(repr=False)
    box_sizes: list = field(default_factory=list)
    box_counts: list = field(default_factory=list)
    fitted_dimension: float = 0.0
    empty: bool = False
    clipped: bool = False


def box_counts(mask: np.ndarray, sizes: Sequence[int]) -> list:
    """Number of aligned boxes of side ``s`` sites containing a mask site."""
    d = mask.ndim
    out = []
    for s in sizes:
        n = mask.shape[0]
        if n % s:
            raise ScalingError(f"box size {s} does not divide grid size {n}")
        shape = []
        for _ in range(d):
            shape += [n // s, s]
        m = mask.reshape(shape)
        out.append(int(m.any(axis=tuple(range(1, 2 * d, 2))).sum()))
    return out


def _fit_box_dimension(sizes_len: Sequence[float], counts: Sequence[float], d: int):
    counts = np.asarray(counts, dtype=np.float64)
    keep = counts > 0
    if keep.sum() < 2:
        return 0.0, False
    fit = linear_fit(-np.log(np.asarray(sizes_len)[keep]), np.log(counts[keep]))
    dim = fit.slope
    clipped = not 0.0 <= dim <= d
    return float(min(max(dim, 0.0), d)), clipped


def default_box_sizes(grid: GridSpec, epsilon_probe: float, factor: float = 4.0) -> list:
    """Dyadic box sizes (in sites) from ``factor * epsilon_probe`` up to an eighth of the box."""
    s0 = max(1, 2 ** math.ceil(math.log2(factor * epsilon_probe / grid.spacing - 1e-9)))
    sizes = []
    s = s0
    while s <= grid.n_per_axis // 8:
        sizes.append(s)
        s *= 2
    return sizes


def thick_points(sample: FieldSample, alpha: float, epsilon_probe: float, *, window: float | None = None,
                 box_sizes: Sequence[int] | None = None) -> ThickPointReport:
    """Sites with ``h_eps(x) / log(1/eps)`` within ``window`` of ``alpha`` and their box dimension.

    ``h_eps`` is the sphere average at radius ``epsilon_probe``; box sizes are
    in sites (default: dyadic from the probe radius up to an eighth of the box).
    """
    grid = sample.grid
    if epsilon_probe < 4 * grid.spacing:
        raise ScalingError(f"epsilon_probe={epsilon_probe:g} < 4 x spacing")
    if epsilon_probe >= 1:
        raise ScalingError("epsilon_probe must be < 1")
    d = grid.dimension_d
    u = 0.1 * math.sqrt(2 * d) if window is None else window
    he = sphere_average_field(sample, epsilon_probe)
    ratio = he / math.log(1.0 / epsilon_probe)
    mask = np.abs(ratio - alpha) <= u
    sizes = default_box_sizes(grid, epsilon_probe) if box_sizes is None else list(box_sizes)
    if len(sizes) < 4:
        raise ScalingError("box counting needs at least 4 dyadic box sizes")
    counts = box_counts(mask, sizes)
    empty = not mask.any()
    dim, clipped = (0.0, False) if empty else _fit_box_dimension([s * grid.spacing for s in sizes], counts, d)
    return ThickPointReport(float(alpha), float(epsilon_probe), float(u), mask, sizes, counts, dim, empty, clipped)


def thick_point_ensemble(reports: Sequence[ThickPointReport], spacing: float, d: int) -> dict:
    """Dimension fitted to the ensemble-mean box counts."""
    sizes = reports[0].box_sizes
    mean_counts = np.mean([r.box_counts for r in reports], axis=0)
    dim, clipped = _fit_box_dimension([s * spacing for s in sizes], mean_counts, d)
    return {"box_sizes": sizes, "mean_counts": mean_counts.tolist(), "fitted_dimension": dim,
            "per_sample": [r.fitted_dimension for r in reports], "clipped": clipped,
            "empty_samples": int(sum(r.empty for r in reports))}


# --------------------------------------------------------------------------- KPZ


@dataclass(frozen=True)
class KpzReport:
    euclidean_dim: float
    quantum_dim: float
    predicted_quantum_dim: float
    params: CouplingParams
    residual: float
    deltas: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def predicted_quantum_dim(params: CouplingParams, euclidean_dim: float) -> float:
    Q, xi = params.Q, params.xi
    disc = Q * Q - 2 * euclidean_dim
    if disc < 0:
        raise ScalingError("Euclidean dimension beyond the KPZ range for these parameters")
    return (Q - math.sqrt(disc)) / xi


def kpz_residual(params: CouplingParams, euclidean_dim: float, quantum_dim: float) -> float:
    """``|dim0 - (xi Q q - xi^2 q^2 / 2)|``."""
    xi = params.xi
    return abs(euclidean_dim - (params.xi_q * quantum_dim - xi * xi * quantum_dim**2 / 2))


def target_set(grid: GridSpec, kind: str) -> np.ndarray:
    """Field-independent sets: ``box`` (central half-box), ``segment`` (axis segment of length L/2)
    or ``cantor`` (middle-thirds product set along the first axis of the segment)."""
    n, d = grid.n_per_axis, grid.dimension_d
    mask = np.zeros(grid.shape, dtype=bool)
    lo, hi = n // 4, 3 * n // 4
    if kind == "box":
        mask[(slice(lo, hi),) * d] = True
    elif kind == "segment":
        mask[(slice(lo, hi),) + (n // 2,) * (d - 1)] = True
    elif kind == "cantor":
        idx = np.arange(lo, hi)
        t = (idx - lo) / (hi - lo)
        keep = np.ones(idx.size, dtype=bool)
        for _ in range(int(math.log(hi - lo, 3))):
            digit = np.floor(t * 3).astype(int)
            keep &= digit != 1
            t = t * 3 - digit
        mask[(idx[keep],) + (n // 2,) * (d - 1)] = True
    else:
        raise ScalingError(f"unknown target set {kind!r}")
    return mask


def farthest_point_radii(weights: WeightGrid, mask: np.ndarray, max_centers: int, *,
                         stencil: str = "moore", min_radius: float = 0.0) -> np.ndarray:
    """Covering radii of the greedy farthest-point traversal of a site set.

    Entry ``k`` is the largest distance from a site of the set to the nearest of
    the first ``k + 1`` centers, so ``N(delta) = 1 + #{k : radii[k] > delta}``.
    The first center is the lowest-index site; ties go to the lowest index.
    """
    sites = np.flatnonzero(mask.ravel())
    if sites.size == 0:
        raise ScalingError("empty target set")
    graph = weights.graph(stencil)
    h = weights.grid.spacing
    best = np.full(sites.size, np.inf)
    center = int(sites[0])
    radii = []
    limit = np.inf
    for _ in range(max_centers):
        dist = csgraph.dijkstra(graph, indices=center, limit=limit)
        best = np.minimum(best, dist[sites] * h)
        k = int(np.argmax(best))
        r = float(best[k])
        radii.append(r)
        if r <= min_radius or r == 0.0:
            break
        center = int(sites[k])
        limit = r / h
    return np.array(radii)


def covering_counts(radii: np.ndarray, deltas: Sequence[float]) -> list:
    """``N(delta)`` from farthest-point radii; nonincreasing in delta by construction."""
    radii = np.asarray(radii)
    out = []
    for dl in deltas:
        over = np.flatnonzero(radii <= dl)
        out.append(int(over[0]) + 1 if over.size else -1)
    return out


def _kpz_sample(seed: int, config: EnsembleConfig, params: CouplingParams, epsilon: float, kind: str,
                max_centers: int, min_radius: float):
    real = realize(config, seed, [epsilon], params)
    mask = target_set(config.grid, kind)
    return farthest_point_radii(real.weights[epsilon], mask, max_centers, stencil=config.stencil,
                                min_radius=min_radius)


def kpz_check(params: CouplingParams, config: EnsembleConfig, epsilon: float, kind: str, *,
              deltas: Sequence[float] | None = None, max_centers: int = 4000, n_deltas: int = 8,
              count_range: tuple[int, int] = (8, 1000)) -> KpzReport:
    """Quantum covering dimension of a deterministic set, against the KPZ prediction.

    ``deltas`` default to a geometric sequence between the ensemble-median
    covering radii after ``count_range`` centers.
    """
    grid = config.grid
    mask = target_set(grid, kind)
    sizes = default_box_sizes(grid, grid.spacing, factor=2.0)
    e_counts = box_counts(mask, sizes)
    euclid, _ = _fit_box_dimension([s * grid.spacing for s in sizes], e_counts, grid.dimension_d)
    fn = functools.partial(_kpz_sample, config=config, params=params, epsilon=epsilon, kind=kind,
                           max_centers=max_centers, min_radius=0.0 if deltas is None else min(deltas))
    radii = map_seeds(fn, config.seeds, config.threads)
    flags = []
    if deltas is None:
        lo_k, hi_k = count_range
        usable = [r for r in radii if r.size > hi_k]
        if not usable:
            raise ScalingError("covering traversal too short; raise max_centers")
        d_hi = float(np.median([r[lo_k - 1] for r in usable]))
        d_lo = float(np.median([r[hi_k - 1] for r in usable]))
        deltas = np.geomspace(d_hi, d_lo, n_deltas).tolist()
    counts = np.array([covering_counts(r, deltas) for r in radii], dtype=np.float64)
    complete = np.all(counts > 0, axis=0)
    if complete.sum() < 3:
        raise ScalingError("fewer than 3 usable delta scales")
    if not complete.all():
        flags.append("dropped deltas beyond the covering traversal")
    mean_log = np.log(counts[:, complete]).mean(axis=0)
    d_used = np.asarray(deltas)[complete]
    q = linear_fit(-np.log(d_used), mean_log).slope
    return KpzReport(float(euclid), float(q), predicted_quantum_dim(params, euclid), params,
                     float(kpz_residual(params, euclid, q)), [float(x) for x in d_used],
                     np.exp(mean_log).tolist(), flags)


# --------------------------------------------------------------------------- shells


@dataclass(frozen=True)
class ShellCorrelationReport:
    radii: list
    correlation: list
    stderr: list
    scrambled_correlation: list
    n: int


def _shell_sample(seed: int, config: EnsembleConfig, params: CouplingParams, epsilon: float, radii):
    real = realize(config, seed, [epsilon], params)
    wg = real.weights[epsilon]
    d = config.dimension
    out = []
    for r in radii:
        a = across_distance(wg, ShellSpec((0.0,) * d, r / 2, r), stencil=config.stencil).value
        hr = sphere_average(real.field, np.zeros(d), r)
        out.append(a / (r**params.xi_q * math.exp(params.xi * hr)))
    return out


def shell_correlation_from_values(values: np.ndarray, radii: Sequence[float], seed: int = 0) -> ShellCorrelationReport:
    """Correlations of the above-median indicators across radii, plus a scrambled control."""
    v = np.asarray(values, dtype=np.float64)
    n, k = v.shape
    if n < 20:
        raise ScalingError("insufficient ensemble for correlations")
    ind = (v > np.median(v, axis=0)).astype(np.float64)
    corr = np.corrcoef(ind, rowvar=False)
    se = (1 - corr**2) / math.sqrt(n - 1)
    rng = stream(seed, 0x5C4A)
    scr = ind.copy()
    for j in range(k):
        scr[:, j] = ind[rng.permutation(n), j]
    scorr = np.corrcoef(scr, rowvar=False)
    return ShellCorrelationReport(list(map(float, radii)), corr.tolist(), se.tolist(), scorr.tolist(), n)


def shell_correlation_probe(params: CouplingParams, config: EnsembleConfig, epsilon: float,
                            radii: Sequence[float]) -> ShellCorrelationReport:
    radii = list(radii)
    if len(radii) < 4:
        raise ScalingError("need at least 4 dyadic radii")
    if any(b / a > 0.5 + 1e-12 for a, b in zip(radii, radii[1:])):
        raise ScalingError("successive radii must shrink by a factor of at least 2")
    fn = functools.partial(_shell_sample, config=config, params=params, epsilon=epsilon, radii=tuple(radii))
    vals = np.array(map_seeds(fn, config.seeds, config.threads))
    return shell_correlation_from_values(vals, radii)
