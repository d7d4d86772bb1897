"""Noise injection, delta sweeps and numerical checks of the stability and
convergence estimates."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, MQBVError
from .filters import FilterParams
from .problem import DiffusionProfile, ManufacturedProblem, TruncationSchedule
from .solver import (
    SolverConfig,
    TimeGrid,
    naive_backward,
    solve_exact_data,
    solve_regularized,
)
from .spectral import EigenBasis, GevreyParams, SpectralField

DEFAULT_DELTAS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
SPREAD_LIMIT = 10.0


# -- noise -------------------------------------------------------------------

def noise_direction(mode_count: int, seed: int, stream: int = 0) -> np.ndarray:
    """Unit vector drawn from an isotropic Gaussian, reproducible per seed."""
    rng = np.random.default_rng([int(seed), int(stream)])
    v = rng.standard_normal(mode_count)
    return v / np.linalg.norm(v)


def _perturb_exactly(base: np.ndarray, direction: np.ndarray, size: float) -> np.ndarray:
    """``base + size*direction`` with the realized difference norm equal to ``size``.

    The realized difference ``r = fl(b + e) - b`` is exact, so the rounding of
    the coarse coordinates (``|b| >> |e|``) can be absorbed by the finely
    resolved ones: first by rescaling all of them together, then by
    re-solving the single coordinate with the finest granularity
    ``|r_j| ulp(b_j)``.  The norm is exact to rounding whenever some
    coordinates resolve ``size`` finely, e.g. when the data has small or zero
    trailing coefficients; for dense data it is limited by ``ulp(b)/size``.
    """
    out = base + size * direction
    r = out - base
    ulp = np.spacing(np.abs(base))

    fine = (r != 0) & (ulp <= 1e-8 * np.abs(r))
    fine_sq = math.fsum(r[fine] ** 2)
    deficit = size * size - math.fsum(r[~fine] ** 2)
    if fine_sq > 0 and deficit > 0:
        out[fine] = base[fine] + r[fine] * math.sqrt(deficit / fine_sq)
        r = out - base

    grain = ulp * (np.abs(r) + ulp)
    gap = abs(size * size - math.fsum(r * r))
    usable = (r != 0) & (r * r >= 4.0 * gap) & (grain < 1e-3 * r * r)
    if not usable.any():
        return out
    j = int(np.argmin(np.where(usable, grain, np.inf)))
    for _ in range(3):
        deficit = size * size - math.fsum(np.delete(r, j) ** 2)
        if deficit <= 0:
            break
        out[j] = base[j] + math.copysign(math.sqrt(deficit), r[j])
        r[j] = out[j] - base[j]
    return out


@dataclass(frozen=True)
class NoiseModel:
    """Measurement error of exact norm ``magnitude`` in a seeded direction."""

    magnitude: float
    seed: int
    direction: SpectralField

    @classmethod
    def draw(cls, mode_count: int, magnitude: float, seed: int, stream: int = 0) -> "NoiseModel":
        if not 0.0 < magnitude < 1.0:
            raise DomainError(f"noise level must lie in (0, 1), got {magnitude}")
        return cls(float(magnitude), int(seed), SpectralField(noise_direction(mode_count, seed, stream)))

    def apply(self, u_T: SpectralField) -> SpectralField:
        return SpectralField(_perturb_exactly(u_T.coeffs, self.direction.coeffs, self.magnitude))


def inject_noise(u_T: SpectralField, delta: float, seed: int) -> SpectralField:
    """Noisy observation ``u_T^delta`` with ``||u_T^delta - u_T|| = delta``."""
    return NoiseModel.draw(u_T.mode_count, delta, seed).apply(u_T)


# -- theoretical rates ----------------------------------------------------------

def _rate_pieces(delta: float, k: float, t: float, profile: DiffusionProfile, C_R: float):
    T, p, q = profile.horizon, profile.lower, profile.upper
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 <= t < T:
        raise DomainError(f"the estimates are stated for 0 <= t < T, got t={t}")
    L = FilterParams(delta, k).log_argument(profile)
    e = (p / q) * (1.0 - t / T)
    log_common = -k * e * math.log(L) + k * e * math.log(k * T * q) + C_R * C_R * (T - t) ** 2
    return e, log_common


def stability_factor(delta: float, k: float, t: float, profile: DiffusionProfile, C_R: float) -> float:
    """Amplification factor of data differences in the stability estimate:
    ``sqrt(2) delta^{-e} L^{-k e} (kTq)^{k e} exp(C_R^2 (T - t)^2)``, ``e = (p/q)(1 - t/T)``."""
    e, log_common = _rate_pieces(delta, k, t, profile, C_R)
    return math.sqrt(2.0) * math.exp(-e * math.log(delta) + log_common)


def theoretical_rate(
    delta: float,
    k: float,
    t: float,
    profile: DiffusionProfile,
    gevrey_norm_of_u: float | None = None,
    C_R: float = 0.0,
    exact_data: bool = False,
) -> tuple[float, float]:
    """Return ``(rate, bound)`` for the error at time ``t``.

    ``rate = delta^{1-e} L^{-k e} (kTq)^{k e} exp(C_R^2 (T-t)^2)`` with
    ``e = (p/q)(1 - t/T)`` and ``L = ln((Tq)^k/(k delta))``.  The bound
    multiplies it by ``sqrt(2)(1 + ||u||)`` for noisy data, or by
    ``sqrt(2) ||u||`` when ``exact_data`` is set; ``||u||`` is the sup-in-time
    Gevrey norm with ``sigma = Tq``, ``gamma = 2k``.  Without a norm the bound
    is ``nan``.
    """
    e, log_common = _rate_pieces(delta, k, t, profile, C_R)
    rate = math.exp((1.0 - e) * math.log(delta) + log_common)
    if gevrey_norm_of_u is None:
        return rate, math.nan
    const = gevrey_norm_of_u if exact_data else 1.0 + gevrey_norm_of_u
    return rate, math.sqrt(2.0) * const * rate


def gevrey_regularity(problem: ManufacturedProblem, k: float) -> float:
    """``||u*||`` in ``C([0, T]; G^{2k}_{Tq})``; ``inf`` when it overflows."""
    profile = problem.diffusion
    return problem.gevrey_sup_norm(GevreyParams(2.0 * k, profile.horizon * profile.upper))


# -- convergence sweep -----------------------------------------------------------

@dataclass(frozen=True)
class SweepPlan:
    deltas: tuple = DEFAULT_DELTAS
    k: float = 1.0
    evaluation_times: tuple | None = None
    replicates: int = 5
    seed_offset: int = 0
    node_count: int = 200
    schedule: TruncationSchedule = field(default_factory=TruncationSchedule)

    def __post_init__(self):
        d = tuple(float(x) for x in self.deltas)
        if not d:
            raise DomainError("a sweep needs at least one delta")
        if any(not 0.0 < x < 1.0 for x in d):
            raise DomainError(f"deltas must lie in (0, 1), got {d}")
        if any(b >= a for a, b in zip(d, d[1:])):
            raise DomainError(f"deltas must be strictly decreasing, got {d}")
        object.__setattr__(self, "deltas", d)
        if self.replicates < 1:
            raise DomainError("replicates must be >= 1")

    @property
    def seeds(self) -> tuple:
        return tuple(self.seed_offset + i for i in range(self.replicates))

    def times(self, horizon: float) -> tuple:
        if self.evaluation_times is None:
            return (0.0, horizon / 4, horizon / 2, 3 * horizon / 4)
        return tuple(float(t) for t in self.evaluation_times)


@dataclass(frozen=True)
class ErrorRecord:
    delta: float
    k: float
    t: float
    p: float
    q: float
    T: float
    modes: int
    seed: int
    err_total: float
    err_exactdata: float
    err_stability: float
    rate: float
    bound: float
    ratio: float
    converged: bool
    exact_bound: float = math.nan
    lipschitz: float = math.nan
    radius: float = math.nan


@dataclass(frozen=True)
class ErrorReport:
    records: tuple
    gevrey_norm: float

    def __post_init__(self):
        ordered = tuple(sorted(self.records, key=lambda r: (-r.delta, r.t, r.seed)))
        object.__setattr__(self, "records", ordered)

    def at(self, t: float) -> list:
        return [r for r in self.records if r.t == t]

    @property
    def times(self) -> list:
        return sorted({r.t for r in self.records})

    @property
    def deltas(self) -> list:
        return sorted({r.delta for r in self.records}, reverse=True)


def run_convergence_sweep(
    problem: ManufacturedProblem,
    plan: SweepPlan | None = None,
    cfg: SolverConfig | None = None,
    basis: EigenBasis | None = None,
    workers: int = 1,
) -> ErrorReport:
    """Solve from noisy data for every (delta, seed) and record the error at
    every evaluation time, split into the exact-data part ``||u - U^delta||``
    and the data-propagation part ``||U^delta - u^delta||``.

    Solver failures are recorded as non-converged rows with ``nan`` errors.
    """
    plan = plan or SweepPlan()
    cfg = cfg or SolverConfig()
    profile = problem.diffusion
    T, p, q = profile.horizon, profile.lower, profile.upper
    grid = TimeGrid(T, plan.node_count)
    basis = basis or EigenBasis(problem.mode_count)
    times = plan.times(T)
    idx = [grid.index_of(t) for t in times]
    exact = problem.amplitudes(grid.nodes[idx])
    u_T = problem.final_data
    gnorm = gevrey_regularity(problem, plan.k)
    finite_norm = gnorm if math.isfinite(gnorm) else None

    def cell(delta):
        radius = plan.schedule(delta)
        src = problem.source.with_radius(radius)
        params = FilterParams(delta, plan.k)
        rows = []
        try:
            U = solve_exact_data(u_T, params, profile, src, grid, cfg, basis).coeffs[idx]
        except MQBVError:
            U = None
        for seed in plan.seeds:
            try:
                if U is None:
                    raise MQBVError("exact-data solve failed")
                data = inject_noise(u_T, delta, seed)
                ud = solve_regularized(data, params, profile, src, grid, cfg, basis).coeffs[idx]
                ok = True
            except MQBVError:
                ud, ok = None, False
            for j, t in enumerate(times):
                rate, bound = theoretical_rate(delta, plan.k, t, profile, finite_norm, src.lipschitz)
                _, exact_bound = theoretical_rate(delta, plan.k, t, profile, finite_norm, src.lipschitz, exact_data=True)
                if ok:
                    e_tot = float(np.linalg.norm(exact[j] - ud[j]))
                    e_ex = float(np.linalg.norm(exact[j] - U[j]))
                    e_st = float(np.linalg.norm(U[j] - ud[j]))
                else:
                    e_tot = e_ex = e_st = math.nan
                rows.append(ErrorRecord(
                    delta, plan.k, t, p, q, T, problem.mode_count, seed,
                    e_tot, e_ex, e_st, rate, bound, e_tot / rate, ok,
                    exact_bound, src.lipschitz, radius,
                ))
        return rows

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(cell, plan.deltas))
    else:
        chunks = [cell(d) for d in plan.deltas]
    return ErrorReport(tuple(r for chunk in chunks for r in chunk), gnorm)


# -- stability experiment -------------------------------------------------------

@dataclass(frozen=True)
class StabilityRecord:
    delta: float
    k: float
    t: float
    epsilon: float
    seed: int
    diff_data: float
    diff_solution: float
    bound: float
    satisfied: bool


@dataclass(frozen=True)
class StabilityReport:
    records: tuple

    def __post_init__(self):
        ordered = tuple(sorted(self.records, key=lambda r: (r.epsilon, r.seed, r.t)))
        object.__setattr__(self, "records", ordered)

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.records)


def run_stability_experiment(
    problem: ManufacturedProblem,
    delta: float,
    epsilons: Sequence[float],
    seeds: Sequence[int],
    times: Sequence[float],
    k: float = 1.0,
    node_count: int = 200,
    cfg: SolverConfig | None = None,
    schedule: TruncationSchedule | None = None,
    basis: EigenBasis | None = None,
) -> StabilityReport:
    """Solve from ``u_T^delta`` and from ``v_T^delta = u_T^delta + eps d`` and
    compare the solution gap with the stability estimate at each time."""
    cfg = cfg or SolverConfig()
    schedule = schedule or TruncationSchedule()
    profile = problem.diffusion
    T = profile.horizon
    for t in times:
        if not 0.0 <= t < T:
            raise DomainError(f"stability is stated for 0 <= t < T, got t={t}")
    grid = TimeGrid(T, node_count)
    idx = [grid.index_of(t) for t in times]
    basis = basis or EigenBasis(problem.mode_count)
    src = problem.source.with_radius(schedule(delta))
    params = FilterParams(delta, k)
    factors = [stability_factor(delta, k, t, profile, src.lipschitz) for t in times]

    records = []
    for seed in seeds:
        u_data = inject_noise(problem.final_data, delta, seed)
        u_sol = solve_regularized(u_data, params, profile, src, grid, cfg, basis).coeffs[idx]
        direction = noise_direction(problem.mode_count, seed, stream=1)
        for eps in epsilons:
            if eps == 0:
                v_data = u_data
            else:
                v_data = SpectralField(_perturb_exactly(u_data.coeffs, direction, float(eps)))
            v_sol = u_sol if eps == 0 else solve_regularized(v_data, params, profile, src, grid, cfg, basis).coeffs[idx]
            dd = float(np.linalg.norm(u_data.coeffs - v_data.coeffs))
            for j, t in enumerate(times):
                ds = float(np.linalg.norm(u_sol[j] - v_sol[j]))
                bound = factors[j] * dd
                records.append(StabilityRecord(delta, k, t, float(eps), seed, dd, ds, bound, ds <= bound))
    return StabilityReport(tuple(records))


# -- rate fitting ------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    t: float
    constant: float
    spread: float
    min_ratio: float
    max_ratio: float
    samples: int
    degenerate: bool

    @property
    def consistent(self) -> bool:
        return not self.degenerate and self.spread <= SPREAD_LIMIT


def fit_rate(report: ErrorReport, aggregate: str = "max") -> dict:
    """Fit ``log(err) = log(C_T) + log(rate)`` per evaluation time.

    Replicates at the same ``(delta, t)`` are first reduced with ``aggregate``:
    ``"max"`` keeps the worst noise realization (the estimates are uniform
    over all data within ``delta``), ``"mean"`` averages, ``"none"`` fits
    every seed separately.  The spread is ``max(err/rate) / min(err/rate)``
    and ``min_ratio`` is the empirical lower envelope.  Needs at least three
    distinct deltas with finite errors.
    """
    reducers = {"max": np.max, "mean": np.mean}
    if aggregate not in reducers and aggregate != "none":
        raise DomainError(f"unknown aggregate {aggregate!r}")
    fits = {}
    for t in report.times:
        rows = [r for r in report.at(t) if r.converged and math.isfinite(r.err_total) and r.err_total > 0]
        deltas = sorted({r.delta for r in rows}, reverse=True)
        if len(deltas) < 3:
            raise DomainError(f"need >= 3 deltas with finite errors at t={t} to fit a rate")
        if aggregate == "none":
            errs = np.array([r.err_total for r in rows])
            rates = np.array([r.rate for r in rows])
        else:
            errs = np.array([reducers[aggregate]([r.err_total for r in rows if r.delta == d]) for d in deltas])
            rates = np.array([next(r.rate for r in rows if r.delta == d) for d in deltas])
        ratios = errs / rates
        log_c = float(np.mean(np.log(ratios)))
        fits[t] = RateFit(
            t=t,
            constant=math.exp(log_c),
            spread=float(ratios.max() / ratios.min()),
            min_ratio=float(ratios.min()),
            max_ratio=float(ratios.max()),
            samples=len(ratios),
            degenerate=bool(np.all(errs == errs[0])),
        )
    return fits


# -- ill-posedness demonstration -------------------------------------------------

@dataclass(frozen=True)
class IllPosedReport:
    amplification: np.ndarray
    naive_error: np.ndarray
    regularized_error: np.ndarray
    overflow: np.ndarray

    @property
    def naive_total(self) -> float:
        return math.hypot(*self.naive_error)

    @property
    def naive_finite_total(self) -> float:
        """Norm over the modes that did not overflow (scaled, so huge entries survive)."""
        return math.hypot(*self.naive_error[np.isfinite(self.naive_error)])

    @property
    def regularized_total(self) -> float:
        return float(np.linalg.norm(self.regularized_error))


def illposed_demo(
    problem: ManufacturedProblem,
    noise: float,
    delta: float,
    k: float = 1.0,
    node_count: int = 200,
    seed: int = 0,
    cfg: SolverConfig | None = None,
    schedule: TruncationSchedule | None = None,
) -> IllPosedReport:
    """Per-mode errors at ``t = 0`` of the naive and regularized inversions of
    the same (possibly noise-free) observation."""
    schedule = schedule or TruncationSchedule()
    profile = problem.diffusion
    grid = TimeGrid(profile.horizon, node_count)
    data = problem.final_data if noise == 0 else inject_noise(problem.final_data, noise, seed)
    src = problem.source.with_radius(max(problem.source.radius, schedule(delta)))
    naive = naive_backward(data, profile, src, grid)
    reg = solve_regularized(data, FilterParams(delta, k), profile, src, grid, cfg)
    exact0 = problem.amplitudes(0.0)
    with np.errstate(invalid="ignore"):
        naive_err = np.where(naive.overflow, np.inf, np.abs(naive.coeffs[0] - exact0))
    return IllPosedReport(naive.amplification, naive_err, np.abs(reg.coeffs[0] - exact0), naive.overflow)
