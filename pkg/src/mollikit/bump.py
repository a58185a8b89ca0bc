"""Radial exponential bump functions and their finite-difference derivatives."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import fd, quad

# |p/r|^2 must stay this far below 1 before the exponent is evaluated.
POLE_GUARD = 1e-14

MAX_BUMP_ORDER = 4

# Central-difference step per derivative order, relative to max(1, r).
# Orders 3 and 4 need a wider step to stay above rounding noise.
_FD_STEPS = {1: 1e-5, 2: 1e-5, 3: 5e-4, 4: 2e-3}

INTEGRAL_FLOOR = 1e-14


class DegenerateBumpError(ValueError):
    pass


class OrderTooHighError(ValueError):
    pass


def as_points(p, n: int) -> np.ndarray:
    """Coerce ``p`` to an array of points with trailing axis of length ``n``.

    In one dimension a bare scalar or a flat array of coordinates is accepted.
    """
    p = np.asarray(p, dtype=float)
    if n == 1 and (p.ndim == 0 or p.shape[-1] != 1):
        p = p[..., None]
    if p.shape[-1] != n:
        raise ValueError(f"expected points of dimension {n}, got shape {p.shape}")
    return p


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


@dataclass(frozen=True)
class BumpFunction:
    """``scale * exp(1 / (|p/radius|^2 - 1))`` inside the ball, 0 outside."""

    n: int = 1
    radius: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if not self.radius > 0 or not self.scale > 0:
            raise ValueError("radius and scale must be positive")

    def __call__(self, p) -> np.ndarray:
        return eval_bump(self, p)


def eval_bump(b: BumpFunction, p) -> np.ndarray:
    p = as_points(p, b.n)
    s = np.sum(p * p, axis=-1) / (b.radius * b.radius)
    out = np.zeros(s.shape)
    inside = s < 1.0 - POLE_GUARD
    out[inside] = b.scale * np.exp(1.0 / (s[inside] - 1.0))
    return _scalar(out)


def fd_step(b: BumpFunction, order: int) -> float:
    return _FD_STEPS[order] * max(1.0, b.radius)


def bump_partial(b: BumpFunction, beta, p) -> np.ndarray:
    """Central-difference approximation of the partial derivative ``beta`` at ``p``.

    One first-order central stencil is composed per unit of ``beta``, so the
    result is exactly zero once ``p`` is farther from the support than the
    stencil reaches (``|beta| * h``).
    """
    beta = tuple(int(v) for v in np.atleast_1d(beta))
    if len(beta) != b.n or min(beta) < 0:
        raise ValueError(f"bad multi-index {beta} for dimension {b.n}")
    order = sum(beta)
    if order > MAX_BUMP_ORDER:
        raise OrderTooHighError(f"|beta| = {order} exceeds {MAX_BUMP_ORDER}")
    p = as_points(p, b.n)
    if order == 0:
        return eval_bump(b, p)
    return _scalar(fd.partial(lambda q: eval_bump(b, q), p, beta, fd_step(b, order)))


def bump_integral(b: BumpFunction, nodes: int | None = None) -> float:
    return quad.integrate_ball(b, b.n, b.radius, nodes)


def normalize(b: BumpFunction, nodes: int | None = None) -> BumpFunction:
    """Rescale ``b`` so its quadrature integral is 1."""
    total = bump_integral(b, nodes)
    if total < INTEGRAL_FLOOR * b.radius**b.n:
        raise DegenerateBumpError(f"bump integral {total!r} below positivity floor")
    return replace(b, scale=b.scale / total)
