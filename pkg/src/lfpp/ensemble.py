"""Per-seed realizations and a deterministic process pool over seeds."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ResourceLimitError, ValidationError
from .field import FieldSample, GridSpec, mollify, sample_spectral_lgf
from .kernel import build_kernel, named_bump
from .metric import CouplingParams, WeightGrid, weight_grid

MAX_ENSEMBLE = 100_000


@dataclass(frozen=True)
class EnsembleConfig:
    dimension: int = 2
    n_per_axis: int = 256
    box_size: float = 4.0
    seeds: tuple[int, ...] = tuple(range(100))
    bump: str = "standard"
    threads: int = 1
    stencil: str = "moore"

    def __post_init__(self):
        if len(self.seeds) > MAX_ENSEMBLE:
            raise ResourceLimitError(f"ensemble of {len(self.seeds)} exceeds the cap of {MAX_ENSEMBLE}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("ensemble seeds must be distinct")

    @property
    def grid(self) -> GridSpec:
        return GridSpec.from_box(self.dimension, self.n_per_axis, self.box_size)

    def kernel(self, epsilon: float):
        return build_kernel(epsilon, named_bump(self.bump, self.dimension))


@dataclass(frozen=True, eq=False)
class Realization:
    """One anchored field with its mollifications and metric weights."""

    field: FieldSample
    mollified: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)


def realize(config: EnsembleConfig, seed: int, epsilons: Sequence[float], params: CouplingParams | None,
            *, flat: bool = False) -> Realization:
    grid = config.grid
    h = sample_spectral_lgf(grid, seed)
    if flat:
        h = h.with_values(np.zeros(grid.shape))
    moll, wts = {}, {}
    for eps in epsilons:
        m = mollify(h, config.kernel(eps))
        moll[eps] = m
        if params is not None:
            wts[eps] = weight_grid(m, params)
    return Realization(h, moll, wts)


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def map_seeds(fn: Callable, seeds: Sequence[int], threads: int = 1) -> list:
    """``[fn(s) for s in seeds]``, optionally over a process pool; order is preserved.

    ``fn`` must be picklable (a module-level function or ``functools.partial``).
    """
    seeds = list(seeds)
    if threads <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    chunk = max(1, len(seeds) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seeds, chunksize=chunk))
