"""Batch driver: build kernels from a config, run checkers, write CSV and JSON reports.

Exit codes: 0 when every selected checker passes, 1 when one fails, 2 for a
bad config or bad flags.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import approx, distrib, geometry
from .bump import BumpFunction
from .kernel import Box, canonical_kernel, check_scaling, varying_kernel
from .mollifier import MAX_ORDER, build_order_k, moment, multi_indices, standard_suite
from .rates import RateReport, check_sweep, geometric_sweep

COLUMNS = ("checker", "case", "epsilon", "error", "slope", "r2", "floor_flag", "verdict", "target")

CHECKERS = (
    "normalization", "support", "scaling", "limits", "x_integral", "corollary",
    "two_point_order", "commutation", "pullback", "embedding",
)
COMMANDS = {
    "moments": ("moments",),
    "verify": ("normalization", "support", "scaling"),
    "rates": ("limits", "x_integral", "corollary", "two_point_order"),
    "pullback": ("commutation", "pullback"),
    "embed": ("embedding",),
    "run": CHECKERS,
}

NORMALIZATION_TOL = 1e-9
MOMENT_TOL = 1e-10
AFFINE_TOL = 1e-5
NONLINEAR_TOL = 1e-4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dim: int = 1
    half_width: float = 5.0
    radius: float = 1.0
    order: int = 0
    declared_order: int | None = None
    kinds: tuple[str, ...] = ("canonical",)
    blend_radius: float = 0.6
    eps0: float = 0.5
    eps_start: float = 0.5
    eps_ratio: float = 0.5
    eps_count: int = 10
    eps_values: tuple[float, ...] | None = None
    suite: tuple[str, ...] = CHECKERS
    grid: int | None = None
    out: Path = Path("mollikit-out")

    def validate(self) -> "RunConfig":
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if not 0 <= self.order <= MAX_ORDER:
            raise ConfigError(f"order must be in 0..{MAX_ORDER}, got {self.order}")
        if self.declared_order is not None and not 0 <= self.declared_order <= MAX_ORDER:
            raise ConfigError("declared order out of range")
        for k in self.kinds:
            if k not in ("canonical", "varying"):
                raise ConfigError(f"unknown kernel kind {k!r}")
        for s in self.suite:
            if s not in CHECKERS and s != "moments":
                raise ConfigError(f"unknown checker {s!r}")
        if self.eps_count < 4:
            raise ConfigError("the sweep needs at least four values")
        eps = self.sweep()
        if eps.max() > self.eps0:
            raise ConfigError(f"sweep exceeds eps0 = {self.eps0:g}")
        if self.radius <= 0 or self.blend_radius <= 0 or self.half_width <= 0:
            raise ConfigError("radii and domain size must be positive")
        return self

    def sweep(self) -> np.ndarray:
        eps = self.eps_values if self.eps_values is not None else geometric_sweep(
            self.eps_start, self.eps_ratio, self.eps_count)
        try:
            return check_sweep(eps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def sup_grid(self) -> int:
        return self.grid or (21 if self.dim == 1 else 11)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.replace(",", " ").split() if v.strip())


def load_config(path: str | None) -> RunConfig:
    """Read an INI file with sections ``kernel``, ``domain``, ``sweep``, ``suite``, ``output``."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
        k = parser["kernel"] if parser.has_section("kernel") else {}
        d = parser["domain"] if parser.has_section("domain") else {}
        s = parser["sweep"] if parser.has_section("sweep") else {}
        u = parser["suite"] if parser.has_section("suite") else {}
        o = parser["output"] if parser.has_section("output") else {}
        cfg = replace(
            cfg,
            dim=int(k.get("dim", cfg.dim)),
            radius=float(k.get("radius", cfg.radius)),
            order=int(k.get("order", cfg.order)),
            declared_order=int(k["declared_order"]) if "declared_order" in k else None,
            kinds=_names(k.get("kind", "canonical")),
            blend_radius=float(k.get("blend_radius", cfg.blend_radius)),
            half_width=float(d.get("half_width", cfg.half_width)),
            eps0=float(s.get("eps0", cfg.eps0)),
            eps_start=float(s.get("start", cfg.eps_start)),
            eps_ratio=float(s.get("ratio", cfg.eps_ratio)),
            eps_count=int(s.get("count", cfg.eps_count)),
            eps_values=_floats(s["values"]) if "values" in s else None,
            suite=CHECKERS if u.get("checkers", "all").strip() == "all" else _names(u["checkers"]),
            grid=int(u["grid"]) if "grid" in u else None,
            out=Path(o.get("dir", str(cfg.out))),
        )
    except (OSError, configparser.Error, KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cfg.eps_values is not None:
        cfg = replace(cfg, eps_count=len(cfg.eps_values))
    return cfg


# ---------------------------------------------------------------------------
# rows


@dataclass
class Result:
    checker: str
    rows: list[tuple] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r[7] == "pass" for r in self.rows)

    def slopes(self) -> dict[str, float]:
        out = {}
        for r in self.rows:
            out.setdefault(r[1], r[4])
        return out


def _verdict(score: float, floor: bool, target: float) -> str:
    return "pass" if floor or score >= target else "fail"


def _rate_rows(checker: str, rep: RateReport, case: str | None = None) -> list[tuple]:
    case = case or rep.label
    return [(checker, case, e, err, rep.slope, rep.r2, rep.floor, rep.verdict, rep.target)
            for e, err in zip(rep.eps, rep.errors)]


def _score_rows(checker: str, case: str, eps, errors, score: float, target: float, floor: bool = False):
    v = _verdict(score, floor, target)
    return [(checker, case, float(e), float(err), score, float("nan"), floor, v, target) for e, err in zip(eps, errors)]


def _neglog(x: float) -> float:
    return -math.log10(x) if x > 0 else math.inf


# ---------------------------------------------------------------------------
# kernels


def kernels(cfg: RunConfig) -> dict:
    n = cfg.dim
    domain = Box.cube(cfg.half_width, n)
    phi = build_order_k(BumpFunction(n, cfg.radius), cfg.order)
    out = {}
    for kind in cfg.kinds:
        if kind == "canonical":
            out[kind] = canonical_kernel(phi, domain, cfg.eps0)
        else:
            phi1 = build_order_k(BumpFunction(n, cfg.blend_radius), cfg.order)
            out[kind] = varying_kernel(phi, phi1, domain=domain, eps0=cfg.eps0)
    return out


# ---------------------------------------------------------------------------
# checkers


def check_moments(cfg: RunConfig) -> Result:
    phi = build_order_k(BumpFunction(cfg.dim, cfg.radius), cfg.order)
    res = Result("moments")
    for alpha in multi_indices(cfg.dim, max(cfg.order, 1)):
        want = 1.0 if sum(alpha) == 0 else 0.0
        if sum(alpha) > cfg.order and sum(alpha) > 0:
            continue
        r = abs(moment(phi, alpha) - want)
        case = "m" + "".join(map(str, alpha))
        res.rows += _score_rows("moments", case, [float("nan")], [r], _neglog(r), _neglog(MOMENT_TOL))
    return res


def check_normalization(cfg: RunConfig) -> Result:
    res = Result("normalization")
    one = approx.TwoPointField(cfg.dim, lambda x, y: 1.0, name="one")
    eps = cfg.sweep()
    for name, K in kernels(cfg).items():
        pts = approx.base_points(K, eps, cfg.sup_grid)
        errs = [float(np.max(np.abs(approx.functional_y(one, K, None, e, pts) - 1.0))) for e in eps]
        res.rows += _score_rows("normalization", name, eps, errs, _neglog(max(errs)), _neglog(NORMALIZATION_TOL))
    return res


def check_support(cfg: RunConfig) -> Result:
    res = Result("support")
    eps = cfg.sweep()
    for name, K in kernels(cfg).items():
        rep = geometry.check_support(K, eps=eps)
        res.rows += _score_rows("support", name, eps, rep.ratios, rep.bound / rep.constant, 1.0)
    return res


def check_scaling_suite(cfg: RunConfig) -> Result:
    res = Result("scaling")
    eps = cfg.sweep()
    for name, K in kernels(cfg).items():
        for p in geometry.default_pairs(cfg.dim):
            rep = check_scaling(K, p.alpha, p.beta, eps)
            score = rep.limit / rep.ratio if rep.ratio > 0 else math.inf
            res.rows += _score_rows("scaling", f"{name}:{rep.label}", eps, rep.values, score, 1.0, rep.floor)
    return res


def check_limits(cfg: RunConfig) -> Result:
    res = Result("limits")
    for name, K in kernels(cfg).items():
        for rep in approx.limits_suite(K, eps=cfg.sweep(), grid=cfg.sup_grid).reports.values():
            res.rows += _rate_rows("limits", rep, f"{name}:{rep.label}")
    return res


def check_x_integral(cfg: RunConfig) -> Result:
    res = Result("x_integral")
    eps = cfg.sweep()
    fields = [f for f in approx.standard_fields(cfg.dim) if f.x_support is not None]
    for name, K in kernels(cfg).items():
        for f in fields:
            rep = approx.check_limits_af(f, K, "b", eps=eps, grid=cfg.sup_grid)
            res.rows += _rate_rows("x_integral", rep, f"{name}:{rep.label}")
            for m in (1, 2):
                alpha = (m,) + (0,) * (cfg.dim - 1)
                rep = approx.check_diag_vanishing(f, K, alpha, eps=eps, grid=cfg.sup_grid)
                res.rows += _rate_rows("x_integral", rep, f"{name}:{rep.label}")
    return res


def check_corollary(cfg: RunConfig) -> Result:
    res = Result("corollary")
    eps = cfg.sweep()
    fields = approx.standard_fields(cfg.dim)
    for name, K in kernels(cfg).items():
        for m in (1, 2):
            alpha = (m,) + (0,) * (cfg.dim - 1)
            for case, f in (("i", fields[0]), ("i", fields[2]), ("ii", fields[2]), ("ii", fields[3])):
                rep = approx.check_corollary(f, K, alpha, case, eps=eps, grid=cfg.sup_grid)
                res.rows += _rate_rows("corollary", rep, f"{name}:{rep.label}")
    return res


def check_order(cfg: RunConfig) -> Result:
    res = Result("two_point_order")
    k = cfg.order if cfg.declared_order is None else cfg.declared_order
    for name, K in kernels(cfg).items():
        for g_name, g in standard_suite(cfg.dim).items():
            f = approx.TwoPointField(cfg.dim, lambda x, y, g=g: g(y), name=g_name)
            rep = approx.two_point_order(f, K, eps=cfg.sweep(), grid=cfg.sup_grid, order=k)
            res.rows += _rate_rows("two_point_order", rep, f"{name}:{rep.label}")
    return res


def _fields(n: int) -> dict:
    B = 0.3 * np.eye(n) + 0.1 * np.eye(n)[::-1]
    return {
        "constant": geometry.constant_field(np.linspace(1.0, 0.5, n)),
        "linear": geometry.linear_field(B),
        "nonlinear": geometry.VectorField(n, lambda p: 0.5 * np.sin(p) + 0.2, label="nonlinear"),
    }


def commutation_rows(n: int, K, eps: float = 0.5, samples: int = 50) -> list[tuple]:
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.0, 1.0, (samples, n))
    y = x + rng.uniform(-0.4, 0.4, (samples, n)) * eps
    rows = []
    Phi = lambda a, b: K(eps, a, b)  # noqa: E731
    for mname, mu in geometry.standard_battery(n).items():
        for xname, X in _fields(n).items():
            linear_case = mu.affine and xname != "nonlinear"
            tol = AFFINE_TOL if linear_case else NONLINEAR_TOL
            rep = geometry.check_commutation(mu, X, Phi, x, y)
            for ident, r in (("L", rep.first), ("L'", rep.second)):
                score = tol / r if r > 0 else math.inf
                rows += _score_rows("commutation", f"{mname}:{xname}:{ident}", [eps], [r], score, 1.0)
    return rows


def check_commutation(cfg: RunConfig) -> Result:
    res = Result("commutation")
    for name, K in kernels(cfg).items():
        for r in commutation_rows(cfg.dim, K):
            res.rows.append((r[0], f"{name}:{r[1]}") + r[2:])
    return res


def check_pullback(cfg: RunConfig) -> Result:
    res = Result("pullback")
    eps = cfg.sweep()
    for name, K in kernels(cfg).items():
        for mname, mu in geometry.standard_battery(cfg.dim).items():
            rep = geometry.check_pullback_preserves(mu, K, eps=eps, grid=cfg.sup_grid)
            s = rep.support
            res.rows += _score_rows("pullback", f"{name}:{mname}:support", eps, s.ratios, s.bound / s.constant, 1.0)
            for sc in rep.scaling:
                score = sc.limit / sc.ratio if sc.ratio > 0 else math.inf
                res.rows += _score_rows("pullback", f"{name}:{mname}:scaling:{sc.label}", eps, sc.values, score,
                                        1.0, sc.floor)
            for r in rep.order.reports.values():
                res.rows += _rate_rows("pullback", r, f"{name}:{mname}:{r.label}")
    return res


def distribution_battery(n: int) -> list[distrib.Distribution]:
    a = 0.1
    return [
        distrib.delta(a, n),
        distrib.delta_prime(a, n),
        distrib.heaviside(0.0, n),
        distrib.regular(lambda y: np.sin(y[..., 0]), n, "sin"),
    ]


def check_embedding(cfg: RunConfig) -> Result:
    res = Result("embedding")
    psi = distrib.TestFunction.bump(cfg.dim, 0.3, 1.5, modulate=lambda x: np.cos(x[..., 0]), label="psi")
    for name, K in kernels(cfg).items():
        for t in distribution_battery(cfg.dim):
            rep = distrib.check_weak_convergence(t, K, psi, eps=cfg.sweep())
            res.rows += _rate_rows("embedding", rep, f"{name}:{rep.label}")
    return res


RUNNERS = {
    "moments": check_moments,
    "normalization": check_normalization,
    "support": check_support,
    "scaling": check_scaling_suite,
    "limits": check_limits,
    "x_integral": check_x_integral,
    "corollary": check_corollary,
    "two_point_order": check_order,
    "commutation": check_commutation,
    "pullback": check_pullback,
    "embedding": check_embedding,
}


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(result: Result, out: Path) -> Path:
    path = out / f"{result.checker}.csv"
    rows = sorted(result.rows, key=lambda r: (r[0], r[1], -r[2]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_summary(results: list[Result], out: Path) -> Path:
    def clean(v):
        return v if math.isfinite(v) else str(v)

    summary = {
        "passed": all(r.passed for r in results),
        "suites": {
            r.checker: {"passed": r.passed, "slopes": {k: clean(v) for k, v in sorted(r.slopes().items())}}
            for r in results
        },
    }
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


def threads() -> int:
    try:
        return max(1, int(os.environ.get("MOLLIKIT_THREADS", "1")))
    except ValueError:
        raise ConfigError("MOLLIKIT_THREADS must be an integer") from None


def run_suite(cfg: RunConfig, checkers) -> tuple[int, list[Result]]:
    """Run ``checkers`` and write reports; returns the exit code and the results."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=threads()) as pool:
        results = list(pool.map(lambda c: RUNNERS[c](cfg), checkers))
    results.sort(key=lambda r: r.checker)
    for r in results:
        write_csv(r, cfg.out)
    write_summary(results, cfg.out)
    return (0 if all(r.passed for r in results) else 1), results


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with kernel, domain, sweep, suite and output sections")
    common.add_argument("--suite", help="comma-separated checkers to run (default: all for the subcommand)")
    common.add_argument("--order", type=int, help="mollifier order k")
    common.add_argument("--dim", type=int, help="space dimension")
    common.add_argument("--eps-count", type=int, help="number of sweep values")
    common.add_argument("--out", help="output directory")
    p = argparse.ArgumentParser(prog="mollikit", description="Numerical checks for local smoothing kernels.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("moments", "print mollifier coefficients and moment residuals"),
        ("verify", "support, scaling and normalization of the kernels"),
        ("rates", "limits, integration over x, corollary and two-point order"),
        ("pullback", "commutation identities and pullback invariance"),
        ("embed", "weak convergence of embedded distributions"),
        ("run", "every checker selected by the config"),
    ):
        sub.add_parser(name, parents=[common], help=help_)
    return p


def _selected(cfg: RunConfig, command: str, flag: str | None) -> tuple[str, ...]:
    allowed = COMMANDS[command]
    if flag:
        chosen = _names(flag)
    elif command == "run":
        chosen = cfg.suite
    else:
        chosen = tuple(c for c in allowed if c in cfg.suite) or allowed
    bad = [c for c in chosen if c not in allowed]
    if bad:
        raise ConfigError(f"checkers {bad} do not belong to '{command}'")
    return chosen


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = load_config(args.config)
        if args.order is not None:
            cfg = replace(cfg, order=args.order)
        if args.dim is not None:
            cfg = replace(cfg, dim=args.dim)
        if args.eps_count is not None:
            cfg = replace(cfg, eps_count=args.eps_count, eps_values=None)
        if args.out is not None:
            cfg = replace(cfg, out=Path(args.out))
        cfg.validate()
        checkers = _selected(cfg, args.command, args.suite)
        threads()
    except ConfigError as exc:
        print(f"mollikit: config error: {exc}", file=sys.stderr)
        return 2
    code, results = run_suite(cfg, checkers)
    for r in results:
        if args.command == "moments":
            phi = build_order_k(BumpFunction(cfg.dim, cfg.radius), cfg.order)
            for alpha, c in phi.coefficients.items():
                print(f"coef {''.join(map(str, alpha))} {c:.17g}")
        for row in r.rows:
            if row[7] == "fail" or r.checker == "moments":
                print(" ".join(_fmt(v) for v in row))
        print(f"{r.checker}: {'pass' if r.passed else 'fail'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
