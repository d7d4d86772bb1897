"""Regularized backward solver, naive backward map and forward oracle.

The regularized solution is the fixed point of

    G(u)(t) = Phi(T, t) u_T - int_t^T Phi(s, t) f_R(s, u(s)) ds

where ``Phi(s, t)`` acts modewise.  On a uniform time grid the s-integral is
the composite trapezoid rule over the nodes ``t_n .. t_N``; because
``Phi(t_j, t_n) = exp(mu_bar(t_n, t_{n+1}) lam) Phi(t_j, t_{n+1})`` the
whole integral table costs one backward sweep per Picard iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, IterationDivergenceError, OracleAccuracyError
from .filters import FilterParams, log_denominator
from .problem import DiffusionProfile, TruncatedSource
from .spectral import LOG_MAX, EigenBasis, SpectralField

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform nodes ``t_n = n T / N`` for ``n = 0..N``."""

    horizon: float
    node_count: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if int(self.node_count) != self.node_count or self.node_count < 2:
            raise DomainError(f"node_count must be an integer >= 2, got {self.node_count}")
        object.__setattr__(self, "node_count", int(self.node_count))

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.node_count + 1)

    @property
    def step(self) -> float:
        return self.horizon / self.node_count

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (within rounding)."""
        n = round(t / self.step)
        if not 0 <= n <= self.node_count or abs(n * self.step - t) > 1e-9 * self.horizon:
            raise DomainError(f"t={t} is not a node of {self}")
        return int(n)


@dataclass(frozen=True)
class SolverConfig:
    picard_tol: float = 1e-10
    max_iterations: int = 200

    def __post_init__(self):
        if not self.picard_tol > 0:
            raise DomainError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.max_iterations < 1:
            raise DomainError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True)
class TrajectorySolution:
    """Coefficient vectors at every grid node, row ``n`` belonging to ``t_n``."""

    grid: TimeGrid
    coeffs: np.ndarray
    iterations_used: int = 0
    final_residual: float = 0.0
    converged: bool = True
    history: tuple = ()
    weighted_history: tuple = ()
    amplification: np.ndarray | None = None
    overflow: np.ndarray | None = None

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != self.grid.node_count + 1:
            raise DimensionError(f"need one coefficient row per node, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def fields(self) -> list[SpectralField]:
        return [SpectralField(row) for row in self.coeffs]

    def at(self, t: float) -> SpectralField:
        return SpectralField(self.coeffs[self.grid.index_of(t)])

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=1)


def _sup_norm(diff: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(diff, axis=1)))


def _check_inputs(data: SpectralField, profile: DiffusionProfile, grid: TimeGrid, basis: EigenBasis | None):
    if abs(grid.horizon - profile.horizon) > 1e-12 * profile.horizon:
        raise DomainError(f"grid horizon {grid.horizon} differs from profile horizon {profile.horizon}")
    if basis is None:
        basis = EigenBasis(data.mode_count)
    if basis.mode_count != data.mode_count:
        raise DimensionError(f"basis has {basis.mode_count} modes, data has {data.mode_count}")
    return basis


class _Operator:
    """Discrete fixed-point map ``G`` for one (data, params, profile, source, grid)."""

    def __init__(self, data, params, profile, src, grid, basis):
        params.check(profile)
        self.params = params
        self.src = src
        self.grid = grid
        self.basis = basis
        self.t = grid.nodes
        self.h = grid.step
        lam = basis.eigenvalues
        self.lam = lam
        m = profile.cumulative(self.t)
        self.m = m
        total = m[-1]
        log_den = log_denominator(params.delta, params.order, total, lam)
        # Phi(T, t_n) and Phi(t_n, t_n), shape (N+1, P)
        self.phi_data = np.exp((total - m)[:, None] * lam - log_den)
        self.phi_diag = np.broadcast_to(np.exp(-log_den), self.phi_data.shape)
        # one-step propagation exp(mu_bar(t_n, t_{n+1}) lam), shape (N, P)
        self.step_growth = np.exp(np.diff(m)[:, None] * lam)
        self.data_term = self.phi_data * data.coeffs
        self.t_col = self.t[:, None]
        if src.forcing is not None:
            self.forcing = np.asarray(src.forcing(self.t, basis.grid), dtype=float)
        else:
            self.forcing = None
        self.linear = src.is_zero

    def source_coeffs(self, U: np.ndarray) -> np.ndarray:
        samples = self.basis.synthesize_many(U)
        vals = self.src.truncated(self.t_col, samples)
        if self.forcing is not None:
            vals = vals + self.forcing
        return self.basis.analyze_many(vals)

    def integral(self, F: np.ndarray) -> np.ndarray:
        """Trapezoid ``int_{t_n}^T Phi(s, t_n) F(s) ds`` for every node."""
        N = self.grid.node_count
        weighted = self.phi_diag * F
        acc = np.empty_like(F)
        acc[N] = 0.5 * weighted[N]
        for n in range(N - 1, -1, -1):
            acc[n] = self.step_growth[n] * acc[n + 1] + weighted[n]
        out = self.h * (acc - 0.5 * weighted)
        out[N] = 0.0
        return out

    def __call__(self, U: np.ndarray) -> np.ndarray:
        if self.linear:
            return self.data_term.copy()
        return self.data_term - self.integral(self.source_coeffs(U))

    def weights(self, profile: DiffusionProfile) -> np.ndarray:
        """Time weights of the stability proof, used to monitor contraction:
        ``delta^{-e} L^{-k e} (kTq)^{k e}`` with ``e = p t / (q T)``."""
        T, p, q, k = profile.horizon, profile.lower, profile.upper, self.params.order
        L = self.params.log_argument(profile)
        e = p * self.t / (q * T)
        return np.exp(-e * math.log(self.params.delta) - k * e * math.log(L) + k * e * math.log(k * T * q))


def solve_regularized(
    data: SpectralField,
    params: FilterParams,
    profile: DiffusionProfile,
    src: TruncatedSource,
    grid: TimeGrid,
    cfg: SolverConfig | None = None,
    basis: EigenBasis | None = None,
) -> TrajectorySolution:
    """Picard iteration for the regularized integral equation.

    Starts from the source-free term ``Phi(T, t) u_T`` and stops at the first
    iterate whose residual ``sup_n ||u_n - G(u)_n||`` is within
    ``cfg.picard_tol``; that residual is reported as ``final_residual``.
    """
    cfg = cfg or SolverConfig()
    basis = _check_inputs(data, profile, grid, basis)
    op = _Operator(data, params, profile, src, grid, basis)
    w = op.weights(profile)[:, None]

    U = op.data_term.copy()
    history, weighted = [], []
    for it in range(1, cfg.max_iterations + 1):
        GU = op(U)
        diff = GU - U
        res = _sup_norm(diff)
        history.append(res)
        weighted.append(_sup_norm(w * diff))
        if not math.isfinite(res):
            raise IterationDivergenceError(f"Picard iterate became non-finite at iteration {it}", res, history)
        if res <= cfg.picard_tol:
            return TrajectorySolution(grid, U, it, res, True, tuple(history), tuple(weighted))
        U = GU
    raise IterationDivergenceError(
        f"Picard iteration stopped after {cfg.max_iterations} iterations with residual {history[-1]:.3e}",
        history[-1],
        history,
    )


def solve_exact_data(
    u_T: SpectralField,
    params: FilterParams,
    profile: DiffusionProfile,
    src: TruncatedSource,
    grid: TimeGrid,
    cfg: SolverConfig | None = None,
    basis: EigenBasis | None = None,
) -> TrajectorySolution:
    """Regularized solution built from noise-free final data."""
    return solve_regularized(u_T, params, profile, src, grid, cfg, basis)


def picard_residual(
    candidate: TrajectorySolution,
    data: SpectralField,
    params: FilterParams,
    profile: DiffusionProfile,
    src: TruncatedSource,
    basis: EigenBasis | None = None,
) -> float:
    """``sup_n ||candidate_n - G(candidate)_n||`` in the H-norm."""
    basis = _check_inputs(data, profile, candidate.grid, basis)
    op = _Operator(data, params, profile, src, candidate.grid, basis)
    U = np.asarray(candidate.coeffs)
    if U.shape != op.data_term.shape:
        raise DimensionError(f"candidate shape {U.shape} does not match {op.data_term.shape}")
    return _sup_norm(U - op(U))


def naive_backward(
    data: SpectralField,
    profile: DiffusionProfile,
    src: TruncatedSource,
    grid: TimeGrid,
    basis: EigenBasis | None = None,
    inner_tol: float = 1e-14,
) -> TrajectorySolution:
    """Unregularized backward representation on the grid.

    Applies ``exp(mu_bar(t, T) lam)`` to the data and marches the source
    integral (same trapezoid rule) from ``T`` down to ``0``.  Modes whose
    value leaves the floating range are stored as ``inf`` and flagged in
    ``overflow``; ``amplification`` holds ``exp(mu_bar(0, T) lam_p)``.
    Nothing is raised for overflow.
    """
    basis = _check_inputs(data, profile, grid, basis)
    lam = basis.eigenvalues
    t = grid.nodes
    N, h = grid.node_count, grid.step
    m = profile.cumulative(t)
    total = m[-1]
    log_amp = total * lam
    with np.errstate(over="ignore"):
        amplification = np.exp(log_amp)
    c = data.coeffs
    nz = c != 0
    with np.errstate(divide="ignore"):
        log_abs = np.where(nz, np.log(np.abs(c)), -np.inf)

    U = np.zeros((N + 1, lam.size))
    overflow = np.zeros(lam.size, dtype=bool)
    # data term, formed in the log domain so zero data stays exactly zero
    for n in range(N + 1):
        expo = (total - m[n]) * lam + log_abs
        big = expo > LOG_MAX
        overflow |= big & nz
        with np.errstate(over="ignore"):
            U[n] = np.where(nz, np.sign(c) * np.exp(np.minimum(expo, LOG_MAX)), 0.0)
        U[n, big & nz] = np.sign(c[big & nz]) * np.inf

    if not src.is_zero:
        forcing = None if src.forcing is None else np.asarray(src.forcing(t, basis.grid), dtype=float)

        def F(n, row):
            finite = np.where(np.isfinite(row), row, 0.0)
            vals = src.truncated(t[n], basis.synthesize_many(finite))
            if forcing is not None:
                vals = vals + forcing[n]
            return basis.analyze_many(vals)

        with np.errstate(over="ignore", invalid="ignore"):
            growth = np.exp(np.diff(m)[:, None] * lam)
            Fn = F(N, U[N])
            acc = 0.5 * Fn
            for n in range(N - 1, -1, -1):
                carried = growth[n] * acc
                known = U[n] - h * carried
                row = known.copy()
                for _ in range(100):
                    new = known - 0.5 * h * F(n, row)
                    done = np.all(np.abs(new - row)[np.isfinite(new)] <= inner_tol * (1 + np.abs(new[np.isfinite(new)])))
                    row = new
                    if done:
                        break
                Fn = F(n, row)
                acc = carried + Fn
                U[n] = row
        bad = ~np.isfinite(U)
        overflow |= bad.any(axis=0)
        U[bad] = np.inf
    return TrajectorySolution(grid, U, 1, 0.0, True, amplification=amplification, overflow=overflow)


def forward_solve(
    u0: SpectralField,
    profile: DiffusionProfile,
    src: TruncatedSource,
    grid: TimeGrid,
    basis: EigenBasis | None = None,
    tol: float = 1e-9,
    max_refinements: int = 14,
) -> TrajectorySolution:
    """Well-posed forward integration of ``u' = -mu A u + f(t, u)``.

    Integrating-factor Heun steps: the linear part is propagated exactly by
    ``exp(-mu_bar(t_n, t_{n+1}) lam)`` and the source is treated to second
    order.  Substeps per grid interval are doubled until two successive
    refinements agree to ``tol`` in the H-norm at ``T``.
    """
    basis = _check_inputs(u0, profile, grid, basis)
    lam = basis.eigenvalues
    forcing = src.forcing

    def rhs(t, c):
        vals = src.truncated(t, basis.synthesize_many(c))
        if forcing is not None:
            vals = vals + forcing(t, basis.grid)
        return basis.analyze_many(vals)

    def integrate_with(sub):
        fine = np.linspace(0.0, grid.horizon, grid.node_count * sub + 1)
        decay = np.exp(-np.diff(profile.cumulative(fine))[:, None] * lam)
        dt = fine[1] - fine[0]
        c = u0.coeffs.copy()
        rows = [c.copy()]
        for i in range(fine.size - 1):
            E = decay[i]
            f0 = rhs(fine[i], c)
            pred = E * (c + dt * f0)
            c = E * (c + 0.5 * dt * f0) + 0.5 * dt * rhs(fine[i + 1], pred)
            if (i + 1) % sub == 0:
                rows.append(c.copy())
        return np.array(rows)

    if src.is_zero:
        decay = np.exp(-profile.cumulative(grid.nodes)[:, None] * lam)
        return TrajectorySolution(grid, decay * u0.coeffs, 1, 0.0, True)

    sub = 1
    prev = integrate_with(sub)
    for _ in range(max_refinements):
        sub *= 2
        cur = integrate_with(sub)
        diff = float(np.linalg.norm(cur[-1] - prev[-1]))
        logger.debug("forward_solve substeps=%d diff=%.3e", sub, diff)
        if diff <= tol:
            return TrajectorySolution(grid, cur, sub, diff, True)
        prev = cur
    raise OracleAccuracyError(f"forward refinement stalled at {sub} substeps per interval (last change {diff:.3e})")
