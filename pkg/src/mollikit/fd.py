"""Composed central-difference stencils.

A derivative of order m is built by composing m first-order central
differences; each elementary operation is an integer shift direction and the
composed stencil has at most 2^m distinct points after merging duplicates.
"""

from __future__ import annotations

import itertools

import numpy as np


def compose(directions) -> list[tuple[np.ndarray, float]]:
    """Return ``[(offset, weight), ...]`` for the composed stencil.

    ``offset`` is an integer vector (multiply by the step ``h``) and the
    weights still need dividing by ``(2h)^m``.
    """
    directions = [np.asarray(d, dtype=int) for d in directions]
    if not directions:
        return []
    merged: dict[tuple[int, ...], float] = {}
    for signs in itertools.product((1, -1), repeat=len(directions)):
        offset = sum(s * d for s, d in zip(signs, directions))
        key = tuple(int(v) for v in offset)
        merged[key] = merged.get(key, 0.0) + float(np.prod(signs))
    return [(np.array(k, dtype=float), w) for k, w in merged.items() if w != 0.0]


def unit(n: int, i: int) -> np.ndarray:
    e = np.zeros(n, dtype=int)
    e[i] = 1
    return e


def expand(index) -> list[int]:
    """Multi-index -> list of axes, one entry per unit of order."""
    return [i for i, k in enumerate(index) for _ in range(int(k))]


def partial(fn, x, index, h: float):
    """Central-difference ``d^index fn`` at points ``x`` (shape (..., n))."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    axes = expand(index)
    if not axes:
        return np.asarray(fn(x), dtype=float)
    total = 0.0
    for offset, weight in compose([unit(n, i) for i in axes]):
        total = total + weight * np.asarray(fn(x + h * offset), dtype=float)
    return total / (2.0 * h) ** len(axes)
