"""Command-line front end.

Usage::

    mqbv {verify-lemmas,solve,sweep,stability,illposed} [--config FILE]
         [--out DIR] [--svg] [--seed-offset N]

The config file holds one ``dotted.key = value`` per line; ``#`` starts a
comment and lists are comma separated.  Unknown keys are rejected.  Exit
status is 0 on success, 1 when a checked bound or contract is violated and 2
on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, MQBVError
from .experiments import (
    SweepPlan,
    fit_rate,
    illposed_demo,
    inject_noise,
    run_convergence_sweep,
    run_stability_experiment,
)
from .filters import FilterParams, check_lemma1, check_lemma2, check_lemma3, phi_values
from .problem import (
    CATALOG_NAMES,
    DiffusionProfile,
    TruncationSchedule,
    fisher_problem,
    linear_problem,
    mu_bar,
)
from .solver import SolverConfig, TimeGrid, picard_residual, solve_regularized
from .spectral import EigenBasis

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2

SWEEP_HEADER = ("delta", "k", "t", "p", "q", "T", "modes", "seed", "err_total", "err_exactdata",
                "err_stability", "rate", "bound", "ratio", "converged")
STABILITY_HEADER = ("delta", "k", "t", "epsilon", "seed", "diff_data", "diff_solution", "bound", "satisfied")
ILLPOSED_HEADER = ("mode", "amplification", "naive_err_or_inf", "regularized_err")
SOLVE_HEADER = ("t", "norm", "err_exact", "closed_form_gap")
LEMMA_HEADER = ("lemma", "delta", "k", "M", "s", "t", "samples", "worst_ratio", "violations")

CLOSED_FORM_TOL = 1e-10


# -- config ---------------------------------------------------------------------

def _floats(text: str) -> tuple:
    items = [s.strip() for s in text.split(",") if s.strip()]
    return tuple(float(s) for s in items)


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in _floats(text))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
KEYS: dict[str, tuple[Callable, object]] = {
    "problem.name": (str, "fisher"),
    "problem.base": (str, "fisher"),
    "problem.nagumo_c": (float, 0.5),
    "diffusion.profile": (str, "constant"),
    "diffusion.p": (float, 1.0),
    "diffusion.q": (float, None),
    "diffusion.T": (float, 1.0),
    "grid.modes": (int, 32),
    "grid.collocation": (int, None),
    "grid.nodes": (int, 200),
    "filter.k": (float, 1.0),
    "filter.delta": (float, 1e-3),
    "schedule.rho": (float, 2.0),
    "solver.tol": (float, 1e-10),
    "solver.max_iterations": (int, 200),
    "solve.noise": (float, 0.0),
    "solve.seed": (int, 0),
    "sweep.deltas": (_floats, (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)),
    "sweep.times": (_floats, None),
    "sweep.replicates": (int, 5),
    "sweep.workers": (int, 1),
    "stability.epsilons": (_floats, (1e-3, 1e-4, 1e-5)),
    "stability.seeds": (int, 10),
    "stability.times": (_floats, None),
    "illposed.noise": (float, 1e-6),
    "illposed.seed": (int, 0),
    "lemmas.deltas": (_floats, tuple(10.0**-j for j in range(1, 9))),
    "lemmas.M": (_floats, (0.5, 1.0, 2.0, 5.0)),
    "lemmas.k": (_floats, (1.0, 1.5, 2.0, 3.0)),
    "lemmas.samples": (int, 10_000),
    "lemmas.pairs": (int, 8),
    "lemmas.seed": (int, 0),
    "lemmas.general": (_bool, False),
    "lemmas.bound_scale": (float, 1.0),
    "output.dir": (str, "."),
}


def parse_config_text(text: str) -> dict:
    """Parse the flat ``key = value`` format into typed values (defaults filled in)."""
    values = {key: default for key, (_, default) in KEYS.items()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        seen.add(key)
        try:
            values[key] = KEYS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return values


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        text = ""
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg = cls(parse_config_text(text))
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def validate(self):
        v = self.values
        try:
            self.profile()
            if v["problem.name"] not in ("linear", "fisher"):
                raise ConfigError(f"problem.name must be 'linear' or 'fisher', got {v['problem.name']!r}")
            if v["problem.base"] not in CATALOG_NAMES:
                raise ConfigError(f"problem.base must be one of {CATALOG_NAMES}")
            EigenBasis(v["grid.modes"], v["grid.collocation"])
            TimeGrid(v["diffusion.T"], v["grid.nodes"])
            FilterParams(v["filter.delta"], v["filter.k"]).check(self.profile())
            TruncationSchedule(v["schedule.rho"])
            self.solver()
            deltas = v["sweep.deltas"]
            if len(set(deltas)) != len(deltas):
                raise ConfigError(f"sweep.deltas contains duplicates: {deltas}")
            self.plan(0)
            if v["stability.seeds"] < 1 or not v["stability.epsilons"]:
                raise ConfigError("stability needs at least one seed and one epsilon")
            if any(e < 0 for e in v["stability.epsilons"]):
                raise ConfigError("stability.epsilons must be >= 0")
            T = v["diffusion.T"]
            for t in self.stability_times():
                if not 0.0 <= t < T:
                    raise ConfigError(f"stability times must lie in [0, T), got {t}")
            for t in v["sweep.times"] or ():
                if not 0.0 <= t < T:
                    raise ConfigError(f"sweep times must lie in [0, T), got {t}")
            if not 0.0 <= v["illposed.noise"] < 1.0 or not 0.0 <= v["solve.noise"] < 1.0:
                raise ConfigError("noise levels must lie in [0, 1)")
            if not (v["lemmas.deltas"] and v["lemmas.M"] and v["lemmas.k"]) or v["lemmas.samples"] < 1:
                raise ConfigError("lemma sampling ranges must be non-empty")
            if v["lemmas.pairs"] < 0 or not v["lemmas.bound_scale"] > 0:
                raise ConfigError("lemmas.pairs must be >= 0 and lemmas.bound_scale > 0")
        except ConfigError:
            raise
        except MQBVError as exc:
            raise ConfigError(str(exc)) from None

    def profile(self) -> DiffusionProfile:
        v = self.values
        kind, p, q, T = v["diffusion.profile"], v["diffusion.p"], v["diffusion.q"], v["diffusion.T"]
        if kind == "constant":
            if q is not None and q != p:
                raise ConfigError("a constant profile needs diffusion.q == diffusion.p")
            return DiffusionProfile.constant(p, T)
        if kind == "affine":
            return DiffusionProfile.affine(T, p, p if q is None else q)
        raise ConfigError(f"diffusion.profile must be 'constant' or 'affine', got {kind!r}")

    def problem(self):
        v = self.values
        if v["problem.name"] == "linear":
            return linear_problem(self.profile(), v["grid.modes"])
        return fisher_problem(self.profile(), v["grid.modes"], v["problem.base"], v["problem.nagumo_c"])

    def basis(self) -> EigenBasis:
        return EigenBasis(self["grid.modes"], self["grid.collocation"])

    def solver(self) -> SolverConfig:
        return SolverConfig(self["solver.tol"], self["solver.max_iterations"])

    def plan(self, seed_offset: int) -> SweepPlan:
        return SweepPlan(
            deltas=self["sweep.deltas"],
            k=self["filter.k"],
            evaluation_times=self["sweep.times"],
            replicates=self["sweep.replicates"],
            seed_offset=seed_offset,
            node_count=self["grid.nodes"],
            schedule=TruncationSchedule(self["schedule.rho"]),
        )

    def stability_times(self) -> tuple:
        times = self["stability.times"]
        return (0.0, self["diffusion.T"] / 2) if times is None else times


# -- output ---------------------------------------------------------------------

def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])


def loglog_svg(title: str, series: dict, width: int = 480, height: int = 360) -> str:
    """Minimal SVG 1.1 log-log chart; ``series`` maps a label to ``(xs, ys)``."""
    pad = 50
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(y)]
    if not pts:
        pts = [(1.0, 1.0), (10.0, 10.0)]
    lx = [math.log10(x) for x, _ in pts]
    ly = [math.log10(y) for _, y in pts]
    x0, x1 = math.floor(min(lx)), math.ceil(max(lx))
    y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    x1, y1 = max(x1, x0 + 1), max(y1, y0 + 1)

    def px(x):
        return pad + (math.log10(x) - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (math.log10(y) - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for e in range(x0, x1 + 1):
        x = px(10.0**e)
        out.append(f'<text x="{x:.1f}" y="{height - pad + 16}" text-anchor="middle" font-size="10">1e{e}</text>')
    for e in range(y0, y1 + 1):
        y = py(10.0**e)
        out.append(f'<text x="{pad - 6}" y="{y + 3:.1f}" text-anchor="end" font-size="10">1e{e}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = colors[i % len(colors)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" points="{coords}"/>')
        out.append(f'<text x="{width - pad}" y="{pad + 14 * i}" text-anchor="end" font-size="11" fill="{color}">{label}</text>')
    out.append('<text x="{0:.1f}" y="{1}" text-anchor="middle" font-size="11">delta</text>'.format(width / 2, height - 12))
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- commands -------------------------------------------------------------------

def cmd_verify_lemmas(cfg: RunConfig, out: Path, args) -> int:
    v = cfg.values
    scale = v["lemmas.bound_scale"]
    c1, s1 = check_lemma1(v["lemmas.deltas"], v["lemmas.M"], v["lemmas.k"], v["lemmas.samples"], scale)
    c2, s2 = check_lemma2(v["lemmas.deltas"], v["lemmas.M"], v["lemmas.k"], v["lemmas.samples"], scale,
                          v["lemmas.seed"])
    c3, s3 = check_lemma3(cfg.profile(), v["lemmas.deltas"], v["lemmas.k"], v["lemmas.samples"],
                          v["lemmas.pairs"], scale, v["lemmas.seed"], v["lemmas.general"])
    cells = c1 + c2 + c3
    write_csv(out / "lemmas.csv", LEMMA_HEADER,
              [(c.lemma, c.delta, c.k, c.M, c.s, c.t, c.samples, c.worst_ratio, c.violations) for c in cells])
    failed = 0
    for lemma, group, skipped in ((1, c1, s1), (2, c2, s2), (3, c3, s3)):
        bad = sum(c.violations for c in group)
        worst = max((c.worst_ratio for c in group), default=math.nan)
        print(f"lemma {lemma}: cells={len(group)} skipped={skipped} worst_ratio={worst:.6g} violations={bad}")
        for c in [c for c in group if not c.ok][:10]:
            print(f"  violation: delta={c.delta:g} k={c.k:g} M={c.M:g} s={c.s:g} t={c.t:g} "
                  f"ratio={c.worst_ratio:.6g} count={c.violations}")
        failed += bad
    return EXIT_VIOLATION if failed else EXIT_OK


def _closed_form(data, params, profile, grid, basis) -> np.ndarray:
    total = mu_bar(profile, 0.0, profile.horizon)
    rows = [phi_values(params, mu_bar(profile, t, profile.horizon), total, basis.eigenvalues) * data.coeffs
            for t in grid.nodes]
    return np.array(rows)


def cmd_solve(cfg: RunConfig, out: Path, args) -> int:
    problem = cfg.problem()
    profile = problem.diffusion
    basis = cfg.basis()
    grid = TimeGrid(profile.horizon, cfg["grid.nodes"])
    delta = cfg["filter.delta"]
    params = FilterParams(delta, cfg["filter.k"])
    src = problem.source.with_radius(max(problem.source.radius, TruncationSchedule(cfg["schedule.rho"])(delta)))
    noise = cfg["solve.noise"]
    data = problem.final_data if noise == 0 else inject_noise(problem.final_data, noise,
                                                               cfg["solve.seed"] + args.seed_offset)
    try:
        sol = solve_regularized(data, params, profile, src, grid, cfg.solver(), basis)
    except MQBVError as exc:
        print(f"solve failed for {problem.source.label} at delta={delta:g}: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    exact = problem.amplitudes(grid.nodes)
    err = np.linalg.norm(sol.coeffs - exact, axis=1)
    if src.is_zero:
        gap = np.linalg.norm(sol.coeffs - _closed_form(data, params, profile, grid, basis), axis=1)
    else:
        gap = np.full(grid.node_count + 1, math.nan)
    write_csv(out / "solve.csv", SOLVE_HEADER, zip(grid.nodes, sol.norms(), err, gap))
    residual = picard_residual(sol, data, params, profile, src, basis)
    print(f"converged={fmt(sol.converged)} iterations={sol.iterations_used} residual={residual:.3g} "
          f"err_t0={err[0]:.6g}")
    if src.is_zero and not np.all(gap <= CLOSED_FORM_TOL):
        print(f"closed-form mismatch {np.max(gap):.3g} > {CLOSED_FORM_TOL:g}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK if sol.converged and residual <= cfg["solver.tol"] else EXIT_VIOLATION


def cmd_sweep(cfg: RunConfig, out: Path, args) -> int:
    problem = cfg.problem()
    report = run_convergence_sweep(problem, cfg.plan(args.seed_offset), cfg.solver(), cfg.basis(),
                                   workers=cfg["sweep.workers"])
    rows = [(r.delta, r.k, r.t, r.p, r.q, r.T, r.modes, r.seed, r.err_total, r.err_exactdata,
             r.err_stability, r.rate, r.bound, r.ratio, r.converged) for r in report.records]
    write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    if args.svg:
        for i, t in enumerate(report.times):
            recs = report.at(t)
            deltas = report.deltas
            worst = [max(r.err_total for r in recs if r.delta == d) for d in deltas]
            bound = [next(r.bound for r in recs if r.delta == d) for d in deltas]
            rate = [next(r.rate for r in recs if r.delta == d) for d in deltas]
            svg = loglog_svg(f"err_total vs delta at t={t:g}",
                             {"err_total (worst seed)": (deltas, worst), "bound": (deltas, bound), "rate": (deltas, rate)})
            (out / f"sweep_t{i}.svg").write_text(svg)
    bad = [r for r in report.records
           if r.converged and math.isfinite(r.bound) and not r.err_total <= r.bound]
    failed = [r for r in report.records if not r.converged]
    try:
        for t, fit in fit_rate(report).items():
            print(f"t={t:g}: C_T={fit.constant:.4g} spread={fit.spread:.4g} lower_envelope={fit.min_ratio:.4g}")
    except MQBVError as exc:
        print(f"rate fit skipped: {exc}")
    print(f"rows={len(report.records)} bound_violations={len(bad)} failed_cells={len(failed)} "
          f"gevrey_norm={report.gevrey_norm:.6g}")
    return EXIT_VIOLATION if bad or failed else EXIT_OK


def cmd_stability(cfg: RunConfig, out: Path, args) -> int:
    problem = cfg.problem()
    seeds = [args.seed_offset + i for i in range(cfg["stability.seeds"])]
    report = run_stability_experiment(
        problem, cfg["filter.delta"], cfg["stability.epsilons"], seeds, cfg.stability_times(),
        k=cfg["filter.k"], node_count=cfg["grid.nodes"], cfg=cfg.solver(),
        schedule=TruncationSchedule(cfg["schedule.rho"]), basis=cfg.basis(),
    )
    rows = [(r.delta, r.k, r.t, r.epsilon, r.seed, r.diff_data, r.diff_solution, r.bound, r.satisfied)
            for r in report.records]
    write_csv(out / "stability.csv", STABILITY_HEADER, rows)
    bad = sum(not r.satisfied for r in report.records)
    print(f"trials={len(report.records)} violations={bad}")
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_illposed(cfg: RunConfig, out: Path, args) -> int:
    problem = cfg.problem()
    rep = illposed_demo(problem, cfg["illposed.noise"], cfg["filter.delta"], cfg["filter.k"], cfg["grid.nodes"],
                        cfg["illposed.seed"] + args.seed_offset, cfg.solver(), TruncationSchedule(cfg["schedule.rho"]))
    rows = [(p + 1, rep.amplification[p], rep.naive_error[p], rep.regularized_error[p])
            for p in range(rep.amplification.size)]
    write_csv(out / "illposed.csv", ILLPOSED_HEADER, rows)
    print(f"naive_err={rep.naive_total:.6g} (finite modes {rep.naive_finite_total:.6g}) "
          f"regularized_err={rep.regularized_total:.6g} overflowed_modes={int(rep.overflow.sum())}")
    return EXIT_OK if np.all(np.isfinite(rep.regularized_error)) else EXIT_VIOLATION


COMMANDS = {
    "verify-lemmas": cmd_verify_lemmas,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "stability": cmd_stability,
    "illposed": cmd_illposed,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mqbv", description="Regularized backward parabolic solver and estimate checks.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--svg", action="store_true", help="emit log-log charts for sweep")
    parser.add_argument("--seed-offset", type=int, default=0, help="added to every seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out if args.out is not None else cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](cfg, out, args)


if __name__ == "__main__":
    sys.exit(main())
