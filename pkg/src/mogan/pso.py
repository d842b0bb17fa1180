"""Global-best particle swarm optimization."""

from __future__ import annotations

from dataclasses import dataclass
from collections.abc import Callable

import numpy as np


@dataclass
class PsoConfig:
    particles: int = 50
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    iterations: int = 100
    seed: int = 0
    init_scale: float = 1.0     # initial positions ~ U(-scale, scale)
    # optional early switch-out: stop when the best value improves by
    # less than rel_tol over `patience` iterations
    patience: int = 0
    rel_tol: float = 0.01

    def __post_init__(self):
        if self.particles < 1 or self.iterations < 0:
            raise ValueError("need particles >= 1 and iterations >= 0")
        if not 0.0 < self.inertia < 1.0:
            raise ValueError("need 0 < inertia < 1")


@dataclass
class PsoResult:
    x: np.ndarray
    value: float
    iterations: int
    best_trace: list[float]


def pso_minimize(f: Callable[[np.ndarray], np.ndarray], dim: int,
                 cfg: PsoConfig,
                 init: np.ndarray | None = None) -> PsoResult:
    """Minimize f over R^dim with a global-best swarm.

    f maps an (n, dim) position matrix to (n,) values (batched
    evaluation).  Deterministic for a fixed cfg.seed.  When init rows
    are given they seed the first particles.
    """
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(-cfg.init_scale, cfg.init_scale, (cfg.particles, dim))
    if init is not None:
        init = np.atleast_2d(np.asarray(init, dtype=np.float64))
        k = min(init.shape[0], cfg.particles)
        x[:k] = init[:k]
    v = np.zeros_like(x)
    val = np.asarray(f(x), dtype=np.float64)
    pbest_x = x.copy()
    pbest_v = val.copy()
    g = int(np.argmin(val))
    gbest_x = x[g].copy()
    gbest_v = float(val[g])
    trace = [gbest_v]
    it = 0
    for it in range(1, cfg.iterations + 1):
        r1 = rng.uniform(size=x.shape)
        r2 = rng.uniform(size=x.shape)
        v = (cfg.inertia * v
             + cfg.cognitive * r1 * (pbest_x - x)
             + cfg.social * r2 * (gbest_x - x))
        x = x + v
        val = np.asarray(f(x), dtype=np.float64)
        better = val < pbest_v
        pbest_x[better] = x[better]
        pbest_v[better] = val[better]
        g = int(np.argmin(pbest_v))
        if pbest_v[g] < gbest_v:
            gbest_v = float(pbest_v[g])
            gbest_x = pbest_x[g].copy()
        trace.append(gbest_v)
        if cfg.patience and it >= cfg.patience:
            past = trace[-cfg.patience - 1]
            if past - gbest_v < cfg.rel_tol * max(abs(past), 1e-12):
                break
    return PsoResult(gbest_x, gbest_v, it, trace)
