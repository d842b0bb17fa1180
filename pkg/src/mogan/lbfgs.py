"""Limited-memory BFGS with two-loop recursion and backtracking search."""

from __future__ import annotations

from dataclasses import dataclass
from collections import deque
from collections.abc import Callable

import numpy as np


@dataclass
class LbfgsConfig:
    memory: int = 10
    max_iterations: int = 100
    grad_tol: float = 1e-8          # stop when ||g||_inf falls below
    sufficient_decrease: float = 1e-4   # Armijo constant
    backtrack: float = 0.5
    max_line_steps: int = 30

    def __post_init__(self):
        if self.memory < 1 or self.max_iterations < 0:
            raise ValueError("need memory >= 1 and max_iterations >= 0")


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    line_search_failed: bool
    trace: list[float]


def lbfgs_minimize(f_with_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
                   x0: np.ndarray, cfg: LbfgsConfig | None = None) -> LbfgsResult:
    """Minimize a smooth function given its value-and-gradient oracle.

    The search direction comes from the classic two-loop recursion over
    the last `memory` (s, y) pairs with gamma-scaled identity seed; a
    backtracking line search enforces sufficient decrease, so accepted
    iterates never increase the loss.  On line-search failure, the
    current iterate is returned with the flag set.
    """
    cfg = cfg or LbfgsConfig()
    x = np.asarray(x0, dtype=np.float64).copy()
    fx, g = f_with_grad(x)
    g = np.asarray(g, dtype=np.float64)
    trace = [float(fx)]
    hist: deque[tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=cfg.memory)
    failed = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < cfg.grad_tol:
            return LbfgsResult(x, float(fx), gnorm, it - 1, True, False, trace)
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(hist):
            a = rho * np.dot(s, q)
            q -= a * y
            alphas.append(a)
        if hist:
            s, y, _ = hist[-1]
            gamma = np.dot(s, y) / np.dot(y, y)
            q *= gamma
        for (s, y, rho), a in zip(hist, reversed(alphas)):
            b = rho * np.dot(y, q)
            q += (a - b) * s
        d = -q
        slope = float(np.dot(g, d))
        if slope >= 0:      # not a descent direction; fall back to steepest
            d = -g
            slope = -float(np.dot(g, g))
        # temper the raw-gradient first step so huge gradients don't
        # force deep backtracking
        step = min(1.0, 1.0 / np.sum(np.abs(g))) if not hist else 1.0
        ok = False
        for _ in range(cfg.max_line_steps):
            x_new = x + step * d
            f_new, g_new = f_with_grad(x_new)
            if np.isfinite(f_new) and \
                    f_new <= fx + cfg.sufficient_decrease * step * slope:
                ok = True
                break
            step *= cfg.backtrack
        if not ok:
            failed = True
            break
        s = x_new - x
        y = np.asarray(g_new, dtype=np.float64) - g
        ss = float(np.dot(s, s))
        if ss > 0:
            # modified update (Li & Fukushima): shift y along s until the
            # curvature product is safely positive, so Armijo-only steps
            # through nonconvex regions cannot stall the recursion
            t = max(0.0, 1e-8 - float(np.dot(s, y)) / ss)
            y = y + t * s
            hist.append((s, y, 1.0 / float(np.dot(s, y))))
        x, fx, g = x_new, f_new, np.asarray(g_new, dtype=np.float64)
        trace.append(float(fx))
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return LbfgsResult(x, float(fx), gnorm, it, gnorm < cfg.grad_tol, failed, trace)
