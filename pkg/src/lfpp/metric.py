"""Exponential-metric distances on weighted periodic grids.

A field ``h`` on a grid becomes vertex weights ``w = exp(xi h)``.  Two sites
joined by a stencil edge of Euclidean length ``l`` are at cost
``l * (w_u + w_v) / 2``; distances are graph shortest paths over the torus,
optionally restricted to a site mask.  Shortest paths use the compiled
Dijkstra in :mod:`scipy.sparse.csgraph`.
"""

from __future__ import annotations

import functools
import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy import stats
from scipy.stats import qmc

from .errors import ValidationError
from .field import FieldSample, GridSpec
from .rng import stream

OVERFLOW_LIMIT = 700.0
KINDS = ("point_point", "point_set", "set_set", "across", "around", "internal")


class MetricError(ValidationError):
    """Invalid metric query or weight grid."""


@dataclass(frozen=True)
class CouplingParams:
    gamma: float
    xi: float
    Q: float
    d_gamma: float
    dimension_d: int
    check_consistency: bool = True

    def __post_init__(self):
        d = self.dimension_d
        if not self.xi > 0:
            raise MetricError("xi must be positive")
        if not self.check_consistency:
            return
        if not 0 < self.gamma < math.sqrt(2 * d):
            raise MetricError(f"gamma must lie in (0, sqrt(2d)) = (0, {math.sqrt(2 * d):.4f})")
        if abs(self.Q - (d / self.gamma + self.gamma / 2)) > 1e-12:
            raise MetricError("Q must equal d/gamma + gamma/2")
        if abs(self.xi * self.d_gamma - self.gamma) > 1e-12:
            raise MetricError("xi * d_gamma must equal gamma")

    @classmethod
    def from_gamma(cls, gamma: float, d_gamma: float, d: int) -> "CouplingParams":
        return cls(gamma, gamma / d_gamma, d / gamma + gamma / 2, d_gamma, d)

    @classmethod
    def brownian_map(cls) -> "CouplingParams":
        """d = 2, gamma = sqrt(8/3), d_gamma = 4, so xi = 1/sqrt(6) and xi Q = 5/6."""
        return cls.from_gamma(math.sqrt(8.0 / 3.0), 4.0, 2)

    @classmethod
    def from_xi(cls, xi: float, d: int, Q: float | None = None) -> "CouplingParams":
        """Only ``xi`` (and optionally ``Q``) known; consistency checks are off."""
        Q = math.sqrt(2 * d) if Q is None else Q
        return cls(float("nan"), xi, Q, float("nan"), d, check_consistency=False)

    @property
    def xi_q(self) -> float:
        return self.xi * self.Q


@dataclass(frozen=True, eq=False)
class WeightGrid:
    grid: GridSpec
    vertex_weights: np.ndarray
    xi: float
    source_field_id: str = ""

    def __post_init__(self):
        w = self.vertex_weights
        if w.shape != self.grid.shape:
            raise MetricError(f"weights shape {w.shape} != grid shape {self.grid.shape}")
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise MetricError("vertex weights must be positive and finite")

    @classmethod
    def from_array(cls, grid: GridSpec, weights, xi: float = 1.0, source: str = "array") -> "WeightGrid":
        return cls(grid, np.asarray(weights, dtype=np.float64), float(xi), source)

    def graph(self, stencil: str = "moore") -> sparse.csr_matrix:
        cache = self.__dict__.setdefault("_graphs", {})
        if stencil not in cache:
            cache[stencil] = _weighted_graph(self.grid.shape, stencil, self.vertex_weights)
        return cache[stencil]

    def shifted(self, shift: Sequence[int]) -> "WeightGrid":
        """Weights of the cyclically translated field."""
        axes = tuple(range(self.grid.dimension_d))
        return WeightGrid(self.grid, np.roll(self.vertex_weights, tuple(shift), axis=axes), self.xi,
                          self.source_field_id)


def weight_grid(sample: FieldSample, params: CouplingParams) -> WeightGrid:
    """``exp(xi h)`` at every site; refuses exponents beyond the float range."""
    if not sample.epsilon > 0:
        raise MetricError("weights need a mollified field (epsilon > 0)")
    expo = params.xi * sample.values
    bad = np.argwhere(np.abs(expo) > OVERFLOW_LIMIT)
    if bad.size:
        shown = ", ".join(str(tuple(int(i) for i in b)) for b in bad[:10])
        more = f" and {len(bad) - 10} more" if len(bad) > 10 else ""
        raise MetricError(f"|xi*h| > {OVERFLOW_LIMIT:g} at sites {shown}{more}")
    tag = f"{sample.sampler}:seed={sample.seed}:eps={sample.epsilon!r}"
    return WeightGrid(sample.grid, np.exp(expo), float(params.xi), tag)


# --------------------------------------------------------------------------- graph


def stencil_offsets(d: int, stencil: str) -> np.ndarray:
    if stencil == "moore":
        offs = [o for o in itertools.product((-1, 0, 1), repeat=d) if any(o)]
    elif stencil == "von_neumann":
        offs = [tuple(s if i == a else 0 for i in range(d)) for a in range(d) for s in (-1, 1)]
    else:
        raise MetricError(f"unknown stencil {stencil!r}")
    return np.array(offs, dtype=np.int64)


@functools.lru_cache(maxsize=8)
def _topology(shape: tuple[int, ...], stencil: str):
    """CSR structure of the torus stencil graph with per-edge Euclidean lengths (in sites)."""
    d, n = len(shape), shape[0]
    if n < 3:
        raise MetricError("torus graphs need at least 3 sites per axis")
    offs = stencil_offsets(d, stencil)
    coords = np.indices(shape).reshape(d, -1)
    n_sites = coords.shape[1]
    rows = np.tile(np.arange(n_sites), len(offs))
    cols = np.concatenate([np.ravel_multi_index(coords + o[:, None], shape, mode="wrap") for o in offs])
    lengths = np.repeat(np.sqrt((offs**2).sum(axis=1)), n_sites)
    m = sparse.csr_matrix((lengths, (rows, cols)), shape=(n_sites, n_sites))
    m.sort_indices()
    row_of = np.repeat(np.arange(n_sites), np.diff(m.indptr))
    return m.indptr, m.indices, m.data.copy(), row_of


def _weighted_graph(shape, stencil, weights: np.ndarray) -> sparse.csr_matrix:
    indptr, indices, lengths, rows = _topology(tuple(shape), stencil)
    w = weights.ravel()
    data = lengths * ((w[rows] + w[indices]) * 0.5)
    n = w.size
    return sparse.csr_matrix((data, indices, indptr), shape=(n, n))


# --------------------------------------------------------------------------- queries


@dataclass(frozen=True)
class DistanceResult:
    value: float
    kind: str
    path: list | None = None
    domain_mask_id: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def as_sites(grid: GridSpec, sites) -> np.ndarray:
    """Sorted unique flat site indices.

    ``sites`` is either flat indices (scalar or 1-D) or an ``(m, d)`` array of
    integer grid coordinates.
    """
    arr = np.asarray(sites)
    if arr.size == 0:
        raise MetricError("site set must be nonempty")
    n = grid.n_per_axis
    if arr.ndim == 2:
        if arr.shape[1] != grid.dimension_d:
            raise MetricError(f"coordinates must have {grid.dimension_d} columns")
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise MetricError("grid coordinates must be integers")
        arr = arr.astype(np.int64)
        if np.any(arr < 0) or np.any(arr >= n):
            raise MetricError(f"site coordinates outside the grid [0, {n})")
        flat = np.ravel_multi_index(arr.T, grid.shape)
    elif arr.ndim <= 1:
        flat = arr.astype(np.int64).ravel()
        if np.any(flat < 0) or np.any(flat >= grid.n_sites):
            raise MetricError(f"flat site index outside [0, {grid.n_sites})")
    else:
        raise MetricError("site sets are flat indices or an (m, d) coordinate array")
    return np.unique(flat)


def site_index(grid: GridSpec, coord) -> int:
    """Flat index of one site given by integer coordinates."""
    return int(as_sites(grid, np.atleast_2d(coord))[0])


def _mask_key(mask: np.ndarray) -> str:
    return hashlib.sha256(np.packbits(mask.ravel()).tobytes()).hexdigest()[:16]


def _run(graph, sources: np.ndarray, *, limit: float = np.inf, predecessors: bool = False):
    """Multi-source Dijkstra; returns (dist, pred) with pred None unless requested."""
    out = csgraph.dijkstra(graph, directed=True, indices=sources, min_only=True, limit=limit,
                           return_predecessors=predecessors)
    if predecessors:
        return out[0], out[1]
    return out, None


def _trace(pred: np.ndarray, end: int) -> list:
    path = [int(end)]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def distance(weights: WeightGrid, src, dst, domain=None, *, stencil: str = "moore",
             return_path: bool = False, kind: str | None = None) -> DistanceResult:
    """Shortest-path distance between two site sets, optionally inside a mask.

    The search always starts from the lexicographically smaller of the two
    (sorted) sets, so swapping ``src`` and ``dst`` returns the identical float.
    Disconnected sets give ``inf``.
    """
    grid = weights.grid
    a, b = as_sites(grid, src), as_sites(grid, dst)
    if kind is None:
        kind = "point_point" if a.size == b.size == 1 else ("point_set" if min(a.size, b.size) == 1 else "set_set")
        if domain is not None:
            kind = "internal"
    swapped = tuple(b.tolist()) < tuple(a.tolist())
    if swapped:
        a, b = b, a
    h = grid.spacing
    mask_id = None
    if domain is None:
        g = weights.graph(stencil)
        sa, sb = a, b
        back = None
    else:
        mask = np.asarray(domain, dtype=bool).reshape(-1)
        if mask.size != grid.n_sites:
            raise MetricError("domain mask must cover the grid")
        if not (mask[a].all() and mask[b].all()):
            raise MetricError("source and target sets must lie inside the domain")
        back = np.flatnonzero(mask)
        local = np.full(grid.n_sites, -1, dtype=np.int64)
        local[back] = np.arange(back.size)
        full = weights.graph(stencil)
        g = full[back][:, back]
        sa, sb = local[a], local[b]
        mask_id = _mask_key(mask)
    dist, pred = _run(g, sa, predecessors=return_path)
    k = int(np.argmin(dist[sb]))
    value = float(dist[sb][k]) * h
    path = None
    if return_path and math.isfinite(value):
        path = _trace(pred, int(sb[k]))
        if back is not None:
            path = [int(back[p]) for p in path]
        if swapped:
            path = path[::-1]
    return DistanceResult(value, kind, path, mask_id)


def path_cost(weights: WeightGrid, path: Sequence[int]) -> float:
    """Summed edge cost of a site path (consecutive sites must be stencil neighbours)."""
    grid = weights.grid
    w = weights.vertex_weights.ravel()
    coords = np.array(np.unravel_index(np.asarray(path), grid.shape)).T
    n = grid.n_per_axis
    total = 0.0
    for (u, cu), (v, cv) in zip(zip(path, coords), zip(path[1:], coords[1:])):
        step = (cv - cu + n // 2) % n - n // 2
        if np.max(np.abs(step)) > 1:
            raise MetricError(f"sites {u} and {v} are not neighbours")
        total += math.sqrt(float((step**2).sum())) * ((w[u] + w[v]) * 0.5)
    return total * grid.spacing


# --------------------------------------------------------------------------- shells


@dataclass(frozen=True)
class ShellSpec:
    center: tuple[float, ...]
    r_inner: float
    r_outer: float

    def __post_init__(self):
        if not 0 < self.r_inner < self.r_outer:
            raise MetricError(f"need 0 < r_inner < r_outer, got {self.r_inner}, {self.r_outer}")


def _site_radii(grid: GridSpec, center) -> np.ndarray:
    ax = grid.axis()
    c = np.asarray(center, dtype=np.float64)
    sq = functools.reduce(np.add.outer, [(ax - c[i]) ** 2 for i in range(grid.dimension_d)])
    return np.sqrt(sq)


def shell_sets(grid: GridSpec, shell: ShellSpec):
    """(inner boundary, outer boundary, closed-shell mask); boundaries are sites within spacing/2 of the spheres."""
    h = grid.spacing
    if np.max(np.abs(shell.center)) + shell.r_outer + h > grid.box_size / 2:
        raise MetricError("shell does not fit inside the box")
    if (shell.r_outer - shell.r_inner) / h < 3:
        raise MetricError("shell gap under-resolved (< 3 sites)")
    r = _site_radii(grid, shell.center)
    inner = np.flatnonzero(np.abs(r - shell.r_inner).ravel() <= h / 2)
    outer = np.flatnonzero(np.abs(r - shell.r_outer).ravel() <= h / 2)
    mask = (r >= shell.r_inner - h / 2) & (r <= shell.r_outer + h / 2)
    if inner.size == 0 or outer.size == 0:
        raise MetricError("shell boundary has no sites at this resolution")
    return inner, outer, mask


def across_distance(weights: WeightGrid, shell: ShellSpec, *, stencil: str = "moore") -> DistanceResult:
    inner, outer, mask = shell_sets(weights.grid, shell)
    res = distance(weights, inner, outer, mask, stencil=stencil, kind="across")
    return res


def ray_directions(d: int, n: int) -> np.ndarray:
    """Nested direction family: the first ``m`` rows are the same for every ``n >= m``.

    Starts with an antipodal pair; in 2-D the angles follow the base-2 van der
    Corput sequence, otherwise further directions come from a Halton sequence.
    """
    if d == 2:
        k = np.arange(n)
        vdc = np.zeros(n)
        base, kk = 0.5, k.copy()
        while np.any(kk):
            vdc += base * (kk & 1)
            kk >>= 1
            base /= 2
        th = 2 * math.pi * vdc
        return np.column_stack([np.cos(th), np.sin(th)])
    e = np.zeros(d)
    e[0] = 1.0
    dirs = [e, -e]
    if n > 2:
        u = qmc.Halton(d, scramble=False).random(n - 1)[1:]
        g = stats.norm.ppf(u)
        dirs.extend(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.array(dirs[:n])


def ray_sites(grid: GridSpec, shell: ShellSpec, direction, mask: np.ndarray) -> np.ndarray:
    h = grid.spacing
    s = np.arange(shell.r_inner, shell.r_outer + h / 8, h / 4)
    pts = np.asarray(shell.center) + s[:, None] * np.asarray(direction)[None, :]
    idx = np.rint(pts / h).astype(np.int64) + grid.n_per_axis // 2
    if np.any(idx < 0) or np.any(idx >= grid.n_per_axis):
        raise MetricError("ray leaves the grid")
    flat = np.ravel_multi_index(idx.T, grid.shape)
    _, first = np.unique(flat, return_index=True)
    flat = flat[np.sort(first)]
    flat = flat[mask.ravel()[flat]]
    if flat.size == 0:
        raise MetricError("ray has no sites inside the shell")
    return flat


def around_distance(weights: WeightGrid, shell: ShellSpec, n_rays: int, *,
                    stencil: str = "moore") -> DistanceResult:
    """Largest internal shell distance between pairs of radial crossing rays.

    A lower bound for the supremum over all crossing path pairs; nested ray
    directions make it nondecreasing in ``n_rays``.
    """
    if n_rays < 2:
        raise MetricError("around distance needs at least 2 rays")
    grid = weights.grid
    _, _, mask = shell_sets(grid, shell)
    rays = [ray_sites(grid, shell, u, mask) for u in ray_directions(grid.dimension_d, n_rays)]
    back = np.flatnonzero(mask.ravel())
    local = np.full(grid.n_sites, -1, dtype=np.int64)
    local[back] = np.arange(back.size)
    g = weights.graph(stencil)[back][:, back]
    pair_values = {}
    best, best_pair = -1.0, None
    for i in range(n_rays - 1):
        dist, _ = _run(g, local[rays[i]])
        for j in range(i + 1, n_rays):
            v = float(np.min(dist[local[rays[j]]])) * grid.spacing
            pair_values[(i, j)] = v
            if v > best:
                best, best_pair = v, (i, j)
    return DistanceResult(best, "around", None, _mask_key(mask.ravel()),
                          meta={"n_rays": n_rays, "argmax_pair": list(best_pair), "lower_bound": True})


# --------------------------------------------------------------------------- ensembles


@dataclass(frozen=True)
class MedianEstimate:
    median: float
    ci_low: float
    ci_high: float
    n: int
    level: float


def median_distance(values: Sequence[float], *, n_boot: int = 2000, level: float = 0.95,
                    seed: int = 0, min_size: int = 100) -> MedianEstimate:
    """Median with a percentile-bootstrap interval."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < min_size:
        raise MetricError(f"median needs an ensemble of >= {min_size}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise MetricError("ensemble contains infinite distances")
    rng = stream(seed, 0xB007)
    boots = np.median(x[rng.integers(0, x.size, size=(n_boot, x.size))], axis=1)
    lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
    return MedianEstimate(float(np.median(x)), float(lo), float(hi), int(x.size), level)


def distance_record(result: DistanceResult, *, seed: int, epsilon: float, xi: float, grid: GridSpec,
                    wall_time_ms: float | None = None) -> dict:
    rec = {"kind": result.kind, "value": result.value, "seed": int(seed), "epsilon": float(epsilon),
           "xi": float(xi), "grid": {"d": grid.dimension_d, "n": grid.n_per_axis, "spacing": grid.spacing}}
    if wall_time_ms is not None:
        rec["wall_time_ms"] = float(wall_time_ms)
    if result.path is not None:
        rec["path"] = list(result.path)
    return rec
