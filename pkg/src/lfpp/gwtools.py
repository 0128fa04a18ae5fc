"""Tails of drifted Gaussian processes and of their exponential integrals.

Paths of ``G_t = X_t - a t`` are simulated on a uniform time grid.  For
Brownian ``X`` the running maximum between grid points is sampled exactly from
the Brownian-bridge maximum law, so ``sup_{t <= T} G_t`` has no discretization
bias.  Every block of paths has its own random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .errors import ValidationError
from .rng import stream

BLOCK_PATHS = 2000
_SUP_TAG = 0x50
_INT_TAG = 0x51


class GwError(ValidationError):
    """Invalid process specification or tail request."""


class TruncationError(GwError):
    """Horizon too short for the requested thresholds."""


@dataclass(frozen=True)
class DriftedProcessSpec:
    """``G_t = X_t - a t`` with ``X`` Brownian or with a given increment variance.

    ``increment_variance(t0, t1)`` returns ``Var(X_t1 - X_t0)`` for the custom
    kind; increments are independent Gaussians.
    """

    drift_a: float
    horizon_T: float
    dt: float = 1e-3
    covariance_kind: str = "brownian"
    increment_variance: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.drift_a > 0:
            raise GwError("drift must be positive")
        if not self.horizon_T > 0 or not self.dt > 0:
            raise GwError("horizon and dt must be positive")
        if not self.dt < self.horizon_T / 100:
            raise GwError(f"dt={self.dt} must be below horizon/100 = {self.horizon_T / 100}")
        if self.covariance_kind not in ("brownian", "custom"):
            raise GwError(f"unknown covariance kind {self.covariance_kind!r}")
        if self.covariance_kind == "custom" and self.increment_variance is None:
            raise GwError("custom kind needs an increment_variance function")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_T / self.dt))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def step_variances(self) -> np.ndarray:
        t = self.times()
        if self.covariance_kind == "brownian":
            return np.full(self.n_steps, self.dt)
        var = np.asarray(self.increment_variance(t[:-1], t[1:]), dtype=np.float64)
        if var.shape != (self.n_steps,) or np.any(var < 0):
            raise GwError("increment variances must be nonnegative, one per step")
        return var


def _paths(spec: DriftedProcessSpec, seed: int, tag: int, block: int, n: int) -> np.ndarray:
    """``n`` paths of G on the time grid, shape (n, steps + 1)."""
    rng = stream(seed, tag, block)
    sd = np.sqrt(spec.step_variances())
    inc = rng.standard_normal((n, spec.n_steps)) * sd - spec.drift_a * spec.dt
    g = np.zeros((n, spec.n_steps + 1))
    np.cumsum(inc, axis=1, out=g[:, 1:])
    return g, rng


def _blocks(n_samples: int):
    for b, start in enumerate(range(0, n_samples, BLOCK_PATHS)):
        yield b, min(BLOCK_PATHS, n_samples - start)


def wilson_interval(hits: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    p = hits / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # exact endpoints at the extremes (rounding can otherwise exclude p)
    lo = 0.0 if hits == 0 else min(p, max(0.0, mid - half))
    hi = 1.0 if hits == n else max(p, min(1.0, mid + half))
    return lo, hi


@dataclass(frozen=True)
class TailReport:
    thresholds: list
    survival: list
    ci_low: list
    ci_high: list
    hits: list
    used: list
    slope: float
    slope_stderr: float
    target_slope: float
    n_samples: int
    flags: list = field(default_factory=list)
    truncation_bound: float = 0.0

    def rows(self):
        return list(zip(self.thresholds, self.survival, self.ci_low, self.ci_high))


def _fit(x, p, used) -> tuple[float, float]:
    x = np.asarray(x)[used]
    y = np.log(np.asarray(p)[used])
    if x.size < 2:
        return float("nan"), float("nan")
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = x.size - 2
    resid = y - A @ coef
    se = math.sqrt(float(resid @ resid) / dof / np.sum((x - x.mean()) ** 2)) if dof > 0 else float("nan")
    return float(coef[0]), se


def _report(thresholds, hits, n, xform, target, min_hits, extra_flags, bound) -> TailReport:
    surv = [h / n for h in hits]
    ci = [wilson_interval(h, n) for h in hits]
    used = [h >= min_hits for h in hits]
    flags = list(extra_flags)
    for t, u in zip(thresholds, used):
        if not u:
            flags.append(f"threshold {t:g} dropped: fewer than {min_hits} hits")
    slope, se = _fit(xform(np.asarray(thresholds, dtype=np.float64)), surv, np.array(used))
    return TailReport([float(t) for t in thresholds], surv, [c[0] for c in ci], [c[1] for c in ci],
                      [int(h) for h in hits], used, slope, se, target, int(n), flags, bound)


def sup_truncation_bound(spec: DriftedProcessSpec, y: float) -> float:
    """Bound on ``P(sup_{t > T} G_t > y)`` for Brownian X (reflection at the horizon)."""
    a, T = spec.drift_a, spec.horizon_T
    return float(math.exp(-2 * a * y) * stats.norm.cdf((y - a * T) / math.sqrt(T))
                 + stats.norm.sf((y + a * T) / math.sqrt(T)))


def sup_tail(spec: DriftedProcessSpec, y_list: Sequence[float], n_samples: int, seed: int, *,
             bridge: bool = True, min_hits: int = 10) -> TailReport:
    """Monte Carlo ``P(sup_{t <= T} G_t > y)`` with Wilson intervals and a log-linear slope fit."""
    y = np.asarray(y_list, dtype=np.float64)
    if np.any(y < 0) or np.any(np.diff(y) <= 0):
        raise GwError("thresholds must be nonnegative and increasing")
    if n_samples < 10_000:
        raise GwError("sup_tail needs at least 10^4 samples")
    if bridge and spec.covariance_kind != "brownian":
        raise GwError("bridge correction is exact only for Brownian increments")
    hits = np.zeros(y.size, dtype=np.int64)
    for b, n in _blocks(n_samples):
        g, rng = _paths(spec, seed, _SUP_TAG, b, n)
        if bridge:
            left, right = g[:, :-1], g[:, 1:]
            u = rng.random(left.shape)
            # Maximum of a Brownian bridge between the two grid values.
            peak = (left + right + np.sqrt((right - left) ** 2 - 2 * spec.dt * np.log1p(-u))) / 2
            sup = peak.max(axis=1)
        else:
            sup = g.max(axis=1)
        hits += (sup[:, None] > y[None, :]).sum(axis=0)
    bound = max(sup_truncation_bound(spec, float(v)) for v in y) if spec.covariance_kind == "brownian" else float("nan")
    return _report(y, hits, n_samples, lambda t: t, -2 * spec.drift_a, min_hits, [], bound)


def exp_integral_truncation(spec: DriftedProcessSpec, x_min: float, rel: float = 0.01) -> float:
    """Bound on ``P(int_T^inf exp(G_t) dt > rel * x_min)`` for Brownian X.

    Past the horizon the integral equals ``exp(G_T) * I'`` with ``I'`` an
    independent copy of the full integral, whose law is ``2 / Gamma(2a, 1)``.
    Splitting on ``G_T > -aT + z sqrt(T)`` gives
    ``sf(z) + P(I' > delta * exp(aT - z sqrt(T)))``, minimized over ``z``.
    """
    a, T = spec.drift_a, spec.horizon_T
    delta = rel * x_min
    z = np.linspace(0.0, 8.0, 801)
    level = delta * np.exp(np.minimum(a * T - z * math.sqrt(T), 700.0))
    total = stats.norm.sf(z) + special.gammainc(2 * a, 2 / level)
    return float(min(1.0, total.min()))


def exp_integral_tail(spec: DriftedProcessSpec, x_list: Sequence[float], n_samples: int, seed: int, *,
                      min_hits: int = 10, certify: bool = True, max_bound: float = 1e-3) -> TailReport:
    """Monte Carlo survival of ``int_0^T exp(G_t) dt`` (trapezoid) with a log-log slope fit."""
    x = np.asarray(x_list, dtype=np.float64)
    if np.any(x <= 0) or np.any(np.diff(x) <= 0):
        raise GwError("thresholds must be positive and increasing")
    if n_samples < 10_000:
        raise GwError("exp_integral_tail needs at least 10^4 samples")
    bound = exp_integral_truncation(spec, float(x[0]))
    if certify and bound > max_bound:
        raise TruncationError(
            f"horizon T={spec.horizon_T:g} too short: truncation bound {bound:.2e} > {max_bound:g}")
    hits = np.zeros(x.size, dtype=np.int64)
    for b, n in _blocks(n_samples):
        g, _ = _paths(spec, seed, _INT_TAG, b, n)
        e = np.exp(g)
        integral = spec.dt * (e[:, 1:-1].sum(axis=1) + 0.5 * (e[:, 0] + e[:, -1]))
        hits += (integral[:, None] > x[None, :]).sum(axis=0)
    return _report(x, hits, n_samples, np.log, -2 * spec.drift_a, min_hits, [], bound)


def dufresne_survival(a: float, x) -> np.ndarray:
    """Exact ``P(int_0^inf exp(B_t - a t) dt > x)``; the integral is ``2 / Gamma(2a, 1)``."""
    return special.gammainc(2 * a, 2 / np.asarray(x, dtype=np.float64))


def reflection_survival(a: float, y) -> np.ndarray:
    """Exact ``P(sup_t (B_t - a t) > y) = exp(-2 a y)``."""
    return np.exp(-2 * a * np.asarray(y, dtype=np.float64))


def gaussian_increment_check(spec: DriftedProcessSpec, c_list: Sequence[float], n_samples: int, seed: int) -> dict:
    """Tail of ``sup_{s <= 1} (X_s - X_0)``: slope of ``log P`` against ``C^2`` (should be negative)."""
    if spec.horizon_T < 1:
        raise GwError("horizon must cover [0, 1]")
    c = np.asarray(c_list, dtype=np.float64)
    m = int(round(1.0 / spec.dt))
    hits = np.zeros(c.size, dtype=np.int64)
    for b, n in _blocks(n_samples):
        rng = stream(seed, 0x52, b)
        sd = np.sqrt(spec.step_variances()[:m])
        x = np.cumsum(rng.standard_normal((n, m)) * sd, axis=1)
        hits += (x.max(axis=1)[:, None] >= c[None, :]).sum(axis=0)
    p = hits / n_samples
    used = hits >= 10
    slope, se = _fit(c**2, p, used)
    return {"thresholds": c.tolist(), "survival": p.tolist(), "slope_vs_c2": slope, "stderr": se}
