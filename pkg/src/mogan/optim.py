"""RMSProp updates, gradient clipping and the finite-difference oracle."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from .layers import ParameterBlock

CLIP_LO = -5.0
CLIP_HI = 5.0


class NonFiniteGradient(RuntimeError):
    """Raised when an update sees a NaN/inf gradient (training abort)."""


def clip_elementwise(g: np.ndarray, lo: float = CLIP_LO,
                     hi: float = CLIP_HI) -> np.ndarray:
    if not lo < hi:
        raise ValueError("need lo < hi")
    return np.clip(g, lo, hi)


class RMSProp:
    """Running mean-square scaling: v <- rho v + (1-rho) g^2."""

    def __init__(self, blocks: dict[str, ParameterBlock], lr: float = 0.001,
                 rho: float = 0.9, eps: float = 1e-8):
        if not 0.0 < rho < 1.0:
            raise ValueError("need 0 < rho < 1")
        self.blocks = blocks
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.v = {k: np.zeros_like(b.value) for k, b in blocks.items()}

    def step(self, clip: tuple[float, float] | None = (CLIP_LO, CLIP_HI)) -> None:
        """Apply one update from each block's accumulated gradient."""
        for k, b in self.blocks.items():
            if not np.all(np.isfinite(b.grad)):
                raise NonFiniteGradient(f"non-finite gradient in {k}")
            g = b.grad if clip is None else clip_elementwise(b.grad, *clip)
            v = self.v[k]
            v *= self.rho
            v += (1.0 - self.rho) * g * g
            b.value -= self.lr * g / (np.sqrt(v) + self.eps)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    x is perturbed in place element by element (views included), so f
    may close over the array it came from.
    """
    if h <= 0:
        raise ValueError("need h > 0")
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape)
    for idx in np.ndindex(x.shape):
        keep = x[idx]
        x[idx] = keep + h
        fp = f(x)
        x[idx] = keep - h
        fm = f(x)
        x[idx] = keep
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value near component {idx}")
        out[idx] = (fp - fm) / (2.0 * h)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray,
                   floor: float = 1e-6) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_gradient(f: Callable[[], float], param: np.ndarray,
                   analytic: np.ndarray, h: float = 1e-5) -> float:
    """Relative error of an analytic gradient w.r.t. one parameter array.

    f re-evaluates the loss from current parameter values; param is
    perturbed in place.
    """
    numeric = finite_diff_grad(lambda _: f(), param, h)
    return relative_error(analytic, numeric)
