"""Sample distributions, their embedding through smoothing kernels, and weak convergence.

The embedding of ``t`` is ``R_eps(x) = <t, phi~(eps, x)>``. Weak convergence
``int R_eps psi dx -> <t, psi>`` is measured after swapping the order of
integration: ``int R_eps psi dx = <t, psi_eps>`` with
``psi_eps(y) = int psi(x) phi~(eps, x)(y) dx``. The swapped integrand is smooth
on the scale of ``psi``, so it integrates accurately even when ``t`` is a jump.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fd, quad
from .approx import TwoPointField, functional_x, functional_y
from .bump import BumpFunction, as_points
from .kernel import Box, LocalSmoothingKernel, MultiIndexPair, partial
from .rates import RateReport, check_sweep, dyadic_sweep, fit_rate

PAIRING_FD_STEP = 1e-5
# per-panel nodes for the outer integral over supp(psi); psi is smooth on a fixed
# scale, so a coarser rule than the kernel's suffices and keeps 2D affordable
OUTER_NODES = {1: 48, 2: 16, 3: 8}
KINDS = ("delta", "delta_prime", "heaviside", "regular", "sum")

Edges = list[tuple[float, ...]]


def rule(edges: Edges, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor composite Gauss-Legendre rule from per-axis panel edges."""
    return quad.tensor([quad.axis_panels(tuple(e), N) for e in edges])


def clip(edges: Edges, axis: int, a: float) -> Edges | None:
    """Restrict ``edges`` on ``axis`` to ``[a, inf)``; ``None`` when nothing is left."""
    e = edges[axis]
    if a >= e[-1]:
        return None
    if a <= e[0]:
        return edges
    out = list(edges)
    out[axis] = (a,) + tuple(v for v in e if v > a)
    return out


def _ball_edges(center, r: float, pad: float = 0.0, radii=None) -> Edges:
    cuts = quad.ball_cuts(radii or [r])
    inner = sorted({-c for c in cuts if c < r} | {c for c in cuts if c < r})
    out = []
    for c in center:
        e = [c - r - pad] + ([c - r] if pad > 0 else []) + [c + v for v in inner]
        e += ([c + r] if pad > 0 else []) + [c + r + pad]
        out.append(tuple(e))
    return out


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Smooth ``psi`` vanishing outside the ball ``B(center, radius)``."""

    __test__ = False  # keep pytest from collecting this class

    n: int
    fn: Callable = field(repr=False)
    center: tuple[float, ...]
    radius: float
    label: str = ""
    grad: Callable | None = field(default=None, repr=False)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(as_points(x, self.n)), dtype=float)

    @property
    def support(self) -> Box:
        c = np.asarray(self.center)
        return Box.of(c - self.radius, c + self.radius)

    def gradient(self, x) -> np.ndarray:
        x = as_points(x, self.n)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        return np.stack([fd.partial(self, x, fd.unit(self.n, i), PAIRING_FD_STEP) for i in range(self.n)],
                        axis=-1)

    def edges(self, pad: float = 0.0) -> Edges:
        """Panel edges for integrating against ``psi``, support widened by ``pad``."""
        return _ball_edges(self.center, self.radius, pad)

    @classmethod
    def bump(cls, n: int = 1, center=0.0, radius: float = 1.5, modulate: Callable | None = None,
             label: str = "") -> "TestFunction":
        """A radial bump, optionally multiplied by a smooth function."""
        c = np.broadcast_to(np.asarray(center, dtype=float), (n,)).copy()
        b = BumpFunction(n, radius)
        if modulate is None:
            fn = lambda x: b(x - c)  # noqa: E731
        else:
            fn = lambda x: b(x - c) * modulate(x)  # noqa: E731
        return cls(n, fn, tuple(float(v) for v in c), float(radius), label or "bump")


@dataclass(frozen=True, eq=False)
class Distribution:
    """``delta``, ``delta_prime`` and ``heaviside`` act at ``point`` along ``axis``;
    ``regular`` integrates against ``g``; ``sum`` is a linear combination."""

    n: int
    kind: str
    point: tuple[float, ...] = ()
    g: Callable | None = field(default=None, repr=False)
    axis: int = 0
    terms: tuple = ()
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "regular" and self.g is None:
            raise ValueError("regular distribution needs g")
        if not 0 <= self.axis < self.n:
            raise ValueError("axis out of range")

    def parts(self) -> tuple:
        return self.terms if self.kind == "sum" else ((1.0, self),)

    def __add__(self, other: "Distribution") -> "Distribution":
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        return Distribution(self.n, "sum", terms=self.parts() + other.parts(), label=f"{self.label}+{other.label}")

    def __mul__(self, c: float) -> "Distribution":
        return Distribution(self.n, "sum", terms=tuple((c * a, t) for a, t in self.parts()),
                            label=f"{c:g}*{self.label}")

    __rmul__ = __mul__

    def __sub__(self, other: "Distribution") -> "Distribution":
        return self + (-1.0) * other

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.point, dtype=float)

    def pair(self, psi: TestFunction, N: int | None = None) -> float:
        """``<t, psi>``."""
        N = N or quad.default_nodes(self.n)
        if self.kind == "sum":
            return float(sum(c * t.pair(psi, N) for c, t in self.terms))
        if self.kind == "delta":
            return float(psi(self.a))
        if self.kind == "delta_prime":
            return -float(psi.gradient(self.a)[..., self.axis])
        edges = psi.edges()
        if self.kind == "heaviside":
            edges = clip(edges, self.axis, float(self.a[self.axis]))
            if edges is None:
                return 0.0
            pts, w = rule(edges, N)
            return float(psi(pts) @ w)
        pts, w = rule(edges, N)
        return float((np.asarray(self.g(pts)) * psi(pts)) @ w)

    def is_regular(self) -> bool:
        return all(t.kind == "regular" for _, t in self.parts())


def delta(a=0.0, n: int = 1) -> Distribution:
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,))
    return Distribution(n, "delta", tuple(float(v) for v in a), label=f"delta({a[0]:g})")


def delta_prime(a=0.0, n: int = 1, axis: int = 0) -> Distribution:
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,))
    return Distribution(n, "delta_prime", tuple(float(v) for v in a), axis=axis, label=f"delta'({a[0]:g})")


def heaviside(a=0.0, n: int = 1, axis: int = 0) -> Distribution:
    """Indicator of the half-space ``y[axis] > a``."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,))
    return Distribution(n, "heaviside", tuple(float(v) for v in a), axis=axis, label=f"H({a[axis]:g})")


def regular(g: Callable, n: int = 1, label: str = "g") -> Distribution:
    return Distribution(n, "regular", g=g, label=label)


def _regular_field(t: Distribution) -> TwoPointField:
    return TwoPointField(t.n, lambda x, y: t.g(y), name=t.label)


def embed(t: Distribution, K: LocalSmoothingKernel, eps: float, x, N: int | None = None):
    """``<t, phi~(eps, x)>`` for a batch of base points."""
    if t.n != K.n:
        raise ValueError("dimension mismatch")
    x = as_points(x, K.n)
    K.check_margin(eps, x)
    if t.kind == "sum":
        return sum(c * np.asarray(embed(s, K, eps, x, N)) for c, s in t.terms)
    if t.kind == "regular":
        return functional_y(_regular_field(t), K, None, eps, x, N)
    if t.kind == "delta":
        return K(eps, x, np.broadcast_to(t.a, x.shape))
    if t.kind == "delta_prime":
        e = fd.unit(K.n, t.axis)
        return -np.asarray(partial(K, MultiIndexPair.y(e), eps, x, np.broadcast_to(t.a, x.shape)))
    return _embed_heaviside(t, K, eps, x, N)


def _embed_heaviside(t: Distribution, K: LocalSmoothingKernel, eps: float, x: np.ndarray, N):
    N = N or K.nodes or quad.default_nodes(K.n)
    flat = x.reshape(-1, K.n)
    out = np.empty(len(flat))
    base = _ball_edges((0.0,) * K.n, K.C, radii=K.radii or (K.C,))
    for i, p in enumerate(flat):
        # the kernel lives on |z| < C in the scaled variable y = p + eps z
        cut = (t.a[t.axis] - p[t.axis]) / eps
        if cut <= -K.C:
            out[i] = 1.0  # whole support inside the half-space: normalization
            continue
        edges = clip(base, t.axis, cut)
        if edges is None:
            out[i] = 0.0
            continue
        z, w = rule(edges, N)
        out[i] = eps**K.n * (np.asarray(K.fn(eps, p[None, :], eps * z)) @ w)
    out = out.reshape(x.shape[:-1])
    return float(out) if out.ndim == 0 else out


def smoothed_pairing(t: Distribution, K: LocalSmoothingKernel, psi: TestFunction, eps: float,
                     N: int | None = None) -> float:
    """``int <t, phi~(eps, x)> psi(x) dx`` computed as ``<t, psi_eps>``.

    ``N`` is the per-panel node count of the outer rule over ``supp psi``.
    """
    N = N or OUTER_NODES[K.n]
    f = TwoPointField(K.n, lambda x, y: psi(x), psi.support, psi.label)
    if t.kind == "sum":
        return float(sum(c * smoothed_pairing(s, K, psi, eps, N) for c, s in t.terms))
    if t.kind == "delta":
        return float(functional_x(f, K, None, eps, t.a))
    if t.kind == "delta_prime":
        e = fd.unit(K.n, t.axis)
        return -float(functional_x(f, K, MultiIndexPair.y(e), eps, t.a))
    edges = psi.edges(pad=eps * K.C * 1.01)
    if t.kind == "heaviside":
        edges = clip(edges, t.axis, float(t.a[t.axis]))
        if edges is None:
            return 0.0
    y, w = rule(edges, N)
    vals = functional_x(f, K, None, eps, y)
    if t.kind == "regular":
        vals = vals * np.asarray(t.g(y))
    return float(vals @ w)


def check_weak_convergence(t: Distribution, K: LocalSmoothingKernel, psi: TestFunction, eps=None,
                           N: int | None = None) -> RateReport:
    """``|int R_eps psi dx - <t, psi>|`` over a sweep; target ``k + 0.8`` for regular ``t``, else 0.8."""
    eps = check_sweep(dyadic_sweep() if eps is None else eps)
    exact = t.pair(psi, N)
    errors = [abs(smoothed_pairing(t, K, psi, float(e), N) - exact) for e in eps]
    target = K.order + 0.8 if t.is_regular() else 0.8
    return fit_rate(eps, errors, target=target, label=f"weak:{t.label}:{psi.label}")
