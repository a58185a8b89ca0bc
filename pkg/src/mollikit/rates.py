"""Log-log rate fitting: turns "error = O(eps^m)" claims into measured slopes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FLOOR = 1e-12
MIN_SAMPLES = 4


class InsufficientSamplesError(ValueError):
    pass


def dyadic_sweep(count: int = 10, start: int = 1) -> np.ndarray:
    """``eps_i = 2^-i`` for ``i = start .. start + count - 1``."""
    return 2.0 ** -np.arange(start, start + count, dtype=float)


def geometric_sweep(start: float, ratio: float, count: int) -> np.ndarray:
    return start * ratio ** np.arange(count, dtype=float)


def check_sweep(eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 1 or len(eps) < 2:
        raise ValueError("an eps sweep needs at least two values")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps sweep must be positive and strictly decreasing")
    ratios = eps[1:] / eps[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("eps sweep must be geometric")
    return eps


@dataclass(frozen=True)
class RateReport:
    eps: tuple[float, ...]
    errors: tuple[float, ...]
    slope: float
    r2: float
    floor: bool
    target: float
    label: str = ""

    @property
    def passed(self) -> bool:
        return self.floor or (np.isfinite(self.slope) and self.slope >= self.target)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def rows(self):
        for e, err in zip(self.eps, self.errors):
            yield e, err

    def __str__(self):
        tag = "floor" if self.floor else f"slope={self.slope:.3f} r2={self.r2:.4f}"
        return f"{self.label or 'rate'}: {tag} target>={self.target:g} -> {self.verdict}"


def fit_rate(eps, errors, target: float = 0.8, floor: float = FLOOR, label: str = "") -> RateReport:
    """Least-squares slope of log(error) against log(eps).

    Only errors above ``floor`` enter the fit. With fewer than four of them
    the report carries the floor flag and a NaN slope.
    """
    eps = np.asarray(eps, dtype=float)
    errors = np.abs(np.asarray(errors, dtype=float))
    if eps.shape != errors.shape or eps.ndim != 1:
        raise ValueError("eps and errors must be matching 1-d sequences")
    if len(eps) < MIN_SAMPLES:
        raise InsufficientSamplesError(f"need >= {MIN_SAMPLES} samples, got {len(eps)}")
    check_sweep(eps)
    if not np.all(np.isfinite(errors)):
        raise ValueError("non-finite error sample")
    usable = errors > floor
    if usable.sum() < MIN_SAMPLES:
        return RateReport(tuple(eps), tuple(errors), float("nan"), float("nan"), True, target, label)
    lx, ly = np.log(eps[usable]), np.log(errors[usable])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return RateReport(tuple(eps), tuple(errors), float(slope), float(r2), False, target, label)


@dataclass
class SuiteReport:
    """A named collection of rate reports; passes when every member passes."""

    reports: dict[str, RateReport] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values())

    def __getitem__(self, key):
        return self.reports[key]

    def __str__(self):
        return "\n".join(str(r) for r in self.reports.values())
