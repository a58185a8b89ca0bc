"""Tensor-product Gauss-Legendre quadrature on boxes in up to three dimensions.

Integrals over an ε-ball around a point are done in the scaled variable
``y = x + ε z`` so the node layout relative to the kernel does not depend on ε.

A radial bump is flat near its edge and sharply curved just inside it, which a
single Gauss-Legendre panel resolves poorly in two or more dimensions. Ball
integrals therefore split each axis at ``+-r/2`` and at every support seam,
and the node count is per panel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_NODES = {1: 48, 2: 40, 3: 20}
BALL_SPLIT = 0.5
# panels narrower than this fraction of the box (stencil overhang) get 8 nodes
THIN_PANEL = 0.01
MAX_DIM = 3


def default_nodes(n: int) -> int:
    if not 1 <= n <= MAX_DIM:
        raise ValueError(f"quadrature supports dimensions 1..{MAX_DIM}, got {n}")
    return DEFAULT_NODES[n]


@lru_cache(maxsize=None)
def gauss_legendre(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]; read-only and shared."""
    if N < 2:
        raise ValueError("need at least 2 nodes per axis")
    z, w = np.polynomial.legendre.leggauss(N)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre tensor grid on the box ``[lo, hi]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    nodes_per_axis: int

    @classmethod
    def on_box(cls, lo, hi, N: int | None = None) -> "QuadratureRule":
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if len(lo) != len(hi):
            raise ValueError("box corners differ in dimension")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} .. {hi}")
        return cls(lo, hi, N or default_nodes(len(lo)))

    @property
    def n(self) -> int:
        return len(self.lo)

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        return _tensor_grid(self.lo, self.hi, self.nodes_per_axis)


@lru_cache(maxsize=64)
def _tensor_grid(lo, hi, N):
    z, w = gauss_legendre(N)
    axes, weights = [], []
    for a, b in zip(lo, hi):
        half = 0.5 * (b - a)
        axes.append(0.5 * (a + b) + half * z)
        weights.append(half * w)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    wts = weights[0]
    for wk in weights[1:]:
        wts = np.multiply.outer(wts, wk)
    wts = wts.reshape(-1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def scaled_nodes(n: int, r: float, N: int | None = None, breaks=()):
    """Nodes ``z`` and weights on the fixed box ``[-r, r]^n``.

    ``breaks`` are radii inside ``(0, r)`` where the integrand has a seam
    (a support edge); each axis is then split into Gauss-Legendre panels at
    ``+-break``. ``N`` is per panel; panels thinner than ``THIN_PANEL`` of the box get 8.
    """
    N = N or default_nodes(n)
    cuts = sorted({float(b) for b in breaks if 0 < b < r})
    edges = tuple([-r] + [-b for b in reversed(cuts)] + cuts + [r])
    return _panel_grid(n, edges, N)


def axis_panels(edges, N: int) -> tuple[np.ndarray, np.ndarray]:
    """1D composite Gauss-Legendre rule with a panel between consecutive edges."""
    z, w = gauss_legendre(N)
    z8, w8 = gauss_legendre(8)
    span = edges[-1] - edges[0]
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        zz, ww = (z8, w8) if (b - a) < THIN_PANEL * span else (z, w)
        pts.append(0.5 * (a + b) + 0.5 * (b - a) * zz)
        wts.append(0.5 * (b - a) * ww)
    return np.concatenate(pts), np.concatenate(wts)


def tensor(axes) -> tuple[np.ndarray, np.ndarray]:
    """Tensor product of 1D rules ``[(nodes, weights), ...]``."""
    grid = np.stack(np.meshgrid(*[a for a, _ in axes], indexing="ij"), axis=-1).reshape(-1, len(axes))
    wt = axes[0][1]
    for _, w in axes[1:]:
        wt = np.multiply.outer(wt, w)
    return grid, wt.reshape(-1)


@lru_cache(maxsize=64)
def _panel_grid(n, edges, N):
    rule = axis_panels(edges, N)
    grid, wt = tensor([rule] * n)
    grid.setflags(write=False)
    wt.setflags(write=False)
    return grid, wt


def ball_cuts(radii) -> tuple[float, ...]:
    """Panel cuts for integrands built from radial bumps of the given radii.

    Each support radius is a cut. A split point ``r/2`` is added unless some
    other cut already lies within ``r/5`` of it.
    """
    radii = sorted({float(r) for r in radii})
    cuts = list(radii)
    for r in radii:
        mid = BALL_SPLIT * r
        if all(abs(c - mid) > 0.2 * r for c in cuts):
            cuts.append(mid)
    return tuple(sorted(cuts))


def ball_nodes(n: int, r: float, N: int | None = None):
    """Nodes and weights for integrating a bump of radius ``r`` about 0."""
    return scaled_nodes(n, r, N, ball_cuts([r]))


def integrate_ball(f, n: int, r: float, N: int | None = None) -> float:
    z, w = ball_nodes(n, r, N)
    return float(np.dot(w, np.asarray(f(z), dtype=float)))


def integrate_box(f, lo, hi, N: int | None = None) -> float:
    """Integrate ``f`` (vectorized over points of shape (M, n)) over a box."""
    pts, wts = QuadratureRule.on_box(lo, hi, N).points()
    return float(np.dot(wts, np.asarray(f(pts), dtype=float)))


def integrate_scaled(f, x, eps: float, r: float, N: int | None = None, breaks=()):
    """Integral of ``f`` over the box of half-width ``eps * r`` around ``x``.

    ``x`` may be a batch of centers with shape (..., n); ``f`` then receives
    points of shape (..., M, n) and the result has shape (...).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    n = x.shape[-1]
    z, w = scaled_nodes(n, r, N, breaks)
    y = x[..., None, :] + eps * z
    vals = np.asarray(f(y), dtype=float)
    out = eps**n * (vals @ w)
    return out if out.ndim else float(out)
