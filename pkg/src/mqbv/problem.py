"""Problem data: diffusion coefficient, truncated nonlinear sources and
manufactured test problems with known exact solutions."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import ConstructionError, DomainError, EvaluationError
from .spectral import EigenBasis, GevreyParams, SpectralField, gevrey_norm

PROFILE_SAMPLES = 1001
LIPSCHITZ_SAMPLES = 10_001
LIPSCHITZ_INFLATION = 1.05
MU_BAR_ABS_TOL = 1e-12
RESIDUAL_TOL = 1e-6

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _evaluate_on(fn: Callable, t: np.ndarray) -> np.ndarray:
    """Evaluate a scalar function of time on an array, vectorized if it allows."""
    t = np.asarray(t, dtype=float)
    try:
        out = np.asarray(fn(t), dtype=float)
    except Exception:
        out = None
    if out is not None and out.shape == t.shape:
        return out
    if out is not None and out.ndim == 0:
        return np.full(t.shape, float(out))
    return np.array([float(fn(float(s))) for s in t.ravel()]).reshape(t.shape)


@dataclass(frozen=True)
class DiffusionProfile:
    """Time-dependent diffusivity ``mu`` on ``[0, horizon]`` with certified
    bounds ``lower <= mu(t) <= upper``."""

    mu: Callable[[float], float]
    lower: float
    upper: float
    horizon: float
    label: str = "custom"

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if not 0 < self.lower <= self.upper:
            raise DomainError(f"need 0 < p <= q, got p={self.lower}, q={self.upper}")
        samples = self(np.linspace(0.0, self.horizon, PROFILE_SAMPLES))
        if not np.all(np.isfinite(samples)):
            raise DomainError("mu is not finite on [0, T]")
        lo, hi = samples.min(), samples.max()
        if lo < self.lower or hi > self.upper:
            raise DomainError(
                f"mu leaves [{self.lower}, {self.upper}] on [0, T]: sampled range [{lo}, {hi}]"
            )

    @classmethod
    def constant(cls, value: float = 1.0, horizon: float = 1.0) -> "DiffusionProfile":
        value = float(value)
        return cls(lambda t: value, value, value, float(horizon), label="constant")

    @classmethod
    def affine(cls, horizon: float = 1.0, lower: float = 1.0, upper: float = 1.5) -> "DiffusionProfile":
        """``mu(t) = p + (q - p) t / T``; the default is ``1 + t/(2T)``."""
        T, p, q = float(horizon), float(lower), float(upper)
        return cls(lambda t: p + (q - p) * np.asarray(t) / T, p, q, T, label="affine")

    def __call__(self, t):
        return _evaluate_on(self.mu, t)

    def cumulative(self, nodes) -> np.ndarray:
        """``mu_bar(0, t)`` at each of the sorted ``nodes`` (first node must be 0).

        Each interval uses 16-point Gauss-Legendre, which is exact for the
        constant and affine profiles and spectrally accurate for smooth ones.
        """
        nodes = np.asarray(nodes, dtype=float)
        if nodes[0] != 0.0 or np.any(np.diff(nodes) < 0) or nodes[-1] > self.horizon:
            raise DomainError("cumulative nodes must be sorted, start at 0 and stay within [0, T]")
        a, b = nodes[:-1], nodes[1:]
        half = 0.5 * (b - a)
        pts = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
        pieces = half * (self(pts) @ _GL_WEIGHTS)
        out = np.concatenate([[0.0], np.cumsum(pieces)])
        lo = self.lower * nodes
        hi = self.upper * nodes
        return np.clip(out, lo, hi)


def mu_bar(profile: DiffusionProfile, a: float, b: float) -> float:
    """Integrated diffusivity ``int_a^b mu(s) ds`` by adaptive quadrature."""
    T = profile.horizon
    if not (0.0 <= a <= b <= T):
        raise DomainError(f"mu_bar needs 0 <= a <= b <= T={T}, got a={a}, b={b}")
    if a == b:
        return 0.0
    val, _ = integrate.quad(lambda s: float(profile(s)), a, b, epsabs=MU_BAR_ABS_TOL, epsrel=1e-13, limit=200)
    # p <= mu <= q puts the exact integral in [p(b-a), q(b-a)]
    return float(min(max(val, profile.lower * (b - a)), profile.upper * (b - a)))


@dataclass(frozen=True)
class TruncatedSource:
    """Nonlinearity ``f(t, u)`` with truncation radius ``R`` (argument clamped
    to ``[-R, R]``) and Lipschitz constant ``C_R`` of the truncated map.

    ``f`` acts pointwise and must broadcast over numpy arrays; ``t`` may be a
    scalar or a column array.  An optional ``forcing(t, x)`` term is added
    after truncation; it does not depend on ``u``.  ``lipschitz`` is computed
    by :func:`lipschitz_constant` when left as ``None``.
    """

    f: Callable
    radius: float
    lipschitz: float | None = None
    label: str = "custom"
    derivative: Callable | None = None
    forcing: Callable | None = None
    times: tuple = (0.0,)

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"truncation radius must be positive, got {self.radius}")
        if self.lipschitz is None:
            object.__setattr__(self, "lipschitz", lipschitz_constant(self))
        elif not self.lipschitz >= 0:
            raise DomainError(f"Lipschitz constant must be >= 0, got {self.lipschitz}")

    def truncated(self, t, u):
        return truncate_source(self, t, u)

    def __call__(self, t, x, u):
        """Full source ``f_R(t, u) + forcing(t, x)`` on collocation samples."""
        out = self.truncated(t, u)
        if self.forcing is not None:
            out = out + self.forcing(t, x)
        return out

    def with_radius(self, radius: float) -> "TruncatedSource":
        return dataclasses.replace(self, radius=float(radius), lipschitz=None)

    def with_forcing(self, forcing: Callable | None) -> "TruncatedSource":
        return dataclasses.replace(self, forcing=forcing)

    @property
    def is_zero(self) -> bool:
        return self.label == "linear_zero" and self.forcing is None


def truncate_source(src: TruncatedSource, t, u):
    """``f_R(t, u) = f(t, clamp(u, -R, R))``."""
    R = src.radius
    return src.f(t, np.clip(u, -R, R))


def _numerical_derivative(f: Callable, t, u: np.ndarray, radius: float) -> np.ndarray:
    h = 1e-6 * max(1.0, radius)
    return (f(t, u + h) - f(t, u - h)) / (2 * h)


def lipschitz_constant(src: TruncatedSource) -> float:
    """``sup |df/du|`` over ``[-R, R]`` (and the source's sample times), by
    dense sampling polished with a bounded local maximization, times 1.05."""
    R = float(src.radius)
    u = np.linspace(-R, R, LIPSCHITZ_SAMPLES)
    best = 0.0
    for t in src.times:
        if src.derivative is not None:
            deriv = lambda v, t=t: np.abs(np.asarray(src.derivative(t, v), dtype=float))
        else:
            deriv = lambda v, t=t: np.abs(_numerical_derivative(src.f, t, np.asarray(v, dtype=float), R))
        vals = np.broadcast_to(deriv(u), u.shape)
        if not np.all(np.isfinite(vals)):
            raise EvaluationError(f"non-finite derivative samples for source {src.label!r}")
        j = int(np.argmax(vals))
        peak = float(vals[j])
        lo, hi = u[max(j - 1, 0)], u[min(j + 1, u.size - 1)]
        if hi > lo:
            res = optimize.minimize_scalar(
                lambda v: -float(deriv(np.array(v))), bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-12 * max(1.0, R)},
            )
            if np.isfinite(res.fun):
                peak = max(peak, -float(res.fun))
        best = max(best, peak)
    return LIPSCHITZ_INFLATION * best


# -- catalog -------------------------------------------------------------------

def _fisher(t, u):
    return u - u * u


def _nws(t, u):
    return u - u**3


def _zeldovich(t, u):
    return u * u - u**3


def _zero(t, u):
    return np.zeros_like(np.asarray(u, dtype=float))


CATALOG_NAMES = ("fisher", "nws", "zeldovich", "nagumo", "linear_zero")


def catalog(name: str, radius: float = 2.0, nagumo_c: float = 0.5) -> TruncatedSource:
    """Reaction terms of the classical semilinear models.

    ``fisher``: u - u^2, ``nws``: u - u^3, ``zeldovich``: u^2 - u^3,
    ``nagumo``: u (1 - u)(u - C) with C in (0, 1), ``linear_zero``: 0.
    """
    if name == "fisher":
        return TruncatedSource(_fisher, radius, label=name, derivative=lambda t, u: 1.0 - 2.0 * u)
    if name == "nws":
        return TruncatedSource(_nws, radius, label=name, derivative=lambda t, u: 1.0 - 3.0 * u * u)
    if name == "zeldovich":
        return TruncatedSource(_zeldovich, radius, label=name, derivative=lambda t, u: 2.0 * u - 3.0 * u * u)
    if name == "nagumo":
        C = float(nagumo_c)
        if not 0.0 < C < 1.0:
            raise DomainError(f"Nagumo threshold C must lie in (0, 1), got {C}")
        return TruncatedSource(
            lambda t, u: u * (1.0 - u) * (u - C),
            radius,
            label=name,
            derivative=lambda t, u: -3.0 * u * u + 2.0 * (1.0 + C) * u - C,
        )
    if name == "linear_zero":
        return TruncatedSource(_zero, radius, lipschitz=0.0, label=name, derivative=lambda t, u: np.zeros_like(u))
    raise DomainError(f"unknown source {name!r}; choose from {', '.join(CATALOG_NAMES)}")


# -- truncation schedule -----------------------------------------------------

@dataclass(frozen=True)
class TruncationSchedule:
    """``R(delta) = rho * sqrt(ln ln(e^2 / delta))``, growing without bound as
    delta -> 0 but slowly enough to keep ``exp(C_R^2 T^2)`` polylogarithmic."""

    rho: float = 2.0

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError(f"schedule scale rho must be positive, got {self.rho}")

    def __call__(self, delta: float) -> float:
        if not 0.0 < delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {delta}")
        return self.rho * math.sqrt(math.log(math.log(math.e**2 / delta)))


def default_truncation_schedule(delta: float, rho: float = 2.0) -> float:
    return TruncationSchedule(rho)(delta)


# -- manufactured problems ---------------------------------------------------

class Mode(NamedTuple):
    """One manufactured mode ``amplitude(t) * phi_index``."""

    index: int
    amplitude: Callable
    derivative: Callable | None = None


def _fd_derivative(fn: Callable, t, h: float = 1e-4, lo: float = -math.inf, hi: float = math.inf):
    """Fourth-order difference of ``fn`` at scalar ``t``, one-sided near ``lo``/``hi``
    so that ``fn`` is never sampled outside ``[lo, hi]``."""
    if t - 2 * h < lo:
        return (-25 * fn(t) + 48 * fn(t + h) - 36 * fn(t + 2 * h) + 16 * fn(t + 3 * h) - 3 * fn(t + 4 * h)) / (12 * h)
    if t + 2 * h > hi:
        return (25 * fn(t) - 48 * fn(t - h) + 36 * fn(t - 2 * h) - 16 * fn(t - 3 * h) + 3 * fn(t - 4 * h)) / (12 * h)
    return (-fn(t + 2 * h) + 8 * fn(t + h) - 8 * fn(t - h) + fn(t - 2 * h)) / (12 * h)


@dataclass(frozen=True)
class ManufacturedProblem:
    """A problem whose exact solution ``u*(t) = sum a_p(t) phi_p`` is known.

    ``source`` already carries the compensating forcing ``g(t, x)``, so
    ``u*`` solves the equation exactly for any radius ``R >= max |u*|``.
    """

    diffusion: DiffusionProfile
    source: TruncatedSource
    modes: tuple
    mode_count: int
    base: str
    final_data: SpectralField = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "final_data", self.exact_solution(self.diffusion.horizon))

    @property
    def horizon(self) -> float:
        return self.diffusion.horizon

    def amplitudes(self, t) -> np.ndarray:
        """Coefficient array for time(s) ``t``; shape ``t.shape + (P,)``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.mode_count,))
        for m in self.modes:
            out[..., m.index - 1] += _evaluate_on(m.amplitude, t)
        return out

    def amplitude_derivatives(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.mode_count,))
        for m in self.modes:
            if m.derivative is not None:
                out[..., m.index - 1] += _evaluate_on(m.derivative, t)
            else:
                amp = lambda s, m=m: _evaluate_on(m.amplitude, s)
                flat = [_fd_derivative(amp, float(s), lo=0.0, hi=self.horizon) for s in t.ravel()]
                out[..., m.index - 1] += np.reshape(flat, t.shape)
        return out

    def exact_solution(self, t: float) -> SpectralField:
        return SpectralField(self.amplitudes(float(t)))

    def sup_abs(self, samples: int = 401) -> float:
        """Largest ``|u*(t, x)|`` over a space-time sample grid."""
        basis = EigenBasis(self.mode_count)
        ts = np.linspace(0.0, self.horizon, samples)
        return float(np.abs(basis.synthesize_many(self.amplitudes(ts))).max())

    def gevrey_sup_norm(self, params: GevreyParams, samples: int = 2001) -> float:
        """``sup_t ||u*(t)||`` in the Gevrey norm, sampled on ``[0, T]``."""
        ts = np.linspace(0.0, self.horizon, samples)
        coeffs = self.amplitudes(ts)
        return max(gevrey_norm(SpectralField(c), params) for c in coeffs)

    def residual(self, t: float, basis: EigenBasis | None = None) -> float:
        """H-norm of ``d_t u* + mu A u* - f_R(t, u*) - g`` at time ``t``.

        The time derivative is taken by finite differences, independently of
        the analytic derivatives used to build the forcing.
        """
        basis = basis or EigenBasis(self.mode_count)
        lam = basis.eigenvalues
        c = self.amplitudes(t)
        dc = _fd_derivative(self.amplitudes, float(t), lo=0.0, hi=self.horizon)
        samples = basis.synthesize_many(c)
        rhs = basis.analyze_many(self.source(t, basis.grid, samples))
        res = dc + float(self.diffusion(t)) * lam * c - rhs
        return float(np.linalg.norm(res))

    def with_radius(self, radius: float) -> "ManufacturedProblem":
        return dataclasses.replace(self, source=self.source.with_radius(radius))


def make_manufactured(
    profile: DiffusionProfile,
    base: str,
    modes: Sequence,
    mode_count: int = 64,
    radius: float | None = None,
    nagumo_c: float = 0.5,
    check: bool = True,
) -> ManufacturedProblem:
    """Build a problem with exact solution ``u*(t) = sum a_p(t) phi_p``.

    ``modes`` holds ``(p, a_p)`` or ``(p, a_p, a_p')`` entries.  The forcing
    ``g = d_t u* + mu A u* - f(u*)`` is attached to the catalog source, so the
    PDE residual of ``u*`` vanishes; this is re-checked by finite differences
    at 20 times unless ``check`` is False.
    """
    modes = tuple(Mode(*m) for m in modes)
    if not modes:
        raise ConstructionError("a manufactured problem needs at least one mode")
    for m in modes:
        if not 1 <= m.index <= mode_count:
            raise ConstructionError(f"mode index {m.index} outside 1..{mode_count}")
    src = catalog(base, radius=radius if radius is not None else 2.0, nagumo_c=nagumo_c)

    scaffold = ManufacturedProblem(profile, src, modes, mode_count, base)
    if radius is None:
        # leave headroom so the clamp is inactive on the exact solution
        src = src.with_radius(max(2.0, 1.25 * scaffold.sup_abs()))
    idx = np.array([m.index for m in modes])
    lam_modes = (idx * idx).astype(float)
    norm_const = math.sqrt(2.0 / math.pi)
    reaction = src.f

    def forcing(t, x):
        t_arr = np.asarray(t, dtype=float)
        a = scaffold.amplitudes(t_arr)[..., idx - 1]
        da = scaffold.amplitude_derivatives(t_arr)[..., idx - 1]
        mu_t = profile(t_arr)[..., None]
        x = np.asarray(x, dtype=float)
        sines = norm_const * np.sin(np.multiply.outer(idx, x))
        lin = (da + mu_t * lam_modes * a) @ sines
        u = a @ sines
        return lin - reaction(t_arr[..., None] if t_arr.ndim else t_arr, u)

    problem = ManufacturedProblem(profile, src.with_forcing(forcing), modes, mode_count, base)
    if check:
        basis = EigenBasis(mode_count)
        for t in np.linspace(0.0, profile.horizon, 20):
            r = problem.residual(float(t), basis)
            if not r <= RESIDUAL_TOL:
                raise ConstructionError(f"manufactured residual {r:.3e} > {RESIDUAL_TOL} at t={t:.4g}")
    return problem


def linear_problem(profile: DiffusionProfile | None = None, mode_count: int = 64) -> ManufacturedProblem:
    """Unforced heat equation with ``u*(t) = exp(mu_bar(t, T)) phi_1``.

    For ``mu == 1, T = 1`` this is ``exp(1 - t) phi_1`` with ``u*(T) = phi_1``.
    """
    profile = profile or DiffusionProfile.constant()
    T = profile.horizon
    if profile.lower == profile.upper:
        m = profile.lower
        amp = lambda t: np.exp(m * (T - np.asarray(t)))
        damp = lambda t: -m * np.exp(m * (T - np.asarray(t)))
    else:
        def amp(t):
            t = np.asarray(t, dtype=float)
            vals = [math.exp(mu_bar(profile, float(s), T)) for s in t.ravel()]
            return np.array(vals).reshape(t.shape)

        damp = lambda t: -profile(t) * amp(t)
    problem = make_manufactured(profile, "linear_zero", [(1, amp, damp)], mode_count=mode_count)
    # the exact forcing vanishes identically (checked above); keep the source exactly zero
    return dataclasses.replace(problem, source=problem.source.with_forcing(None))


def fisher_problem(profile: DiffusionProfile | None = None, mode_count: int = 32, base: str = "fisher",
                   nagumo_c: float = 0.5) -> ManufacturedProblem:
    """Two-mode manufactured problem for a catalog reaction term.

    ``u*(t) = 0.5 exp(T - t) phi_1 + 0.25 cos(pi t / (2T)) phi_2``.
    """
    profile = profile or DiffusionProfile.constant()
    T = profile.horizon
    w = math.pi / (2 * T)
    modes = [
        (1, lambda t: 0.5 * np.exp(T - np.asarray(t)), lambda t: -0.5 * np.exp(T - np.asarray(t))),
        (2, lambda t: 0.25 * np.cos(w * np.asarray(t)), lambda t: -0.25 * w * np.sin(w * np.asarray(t))),
    ]
    return make_manufactured(profile, base, modes, mode_count=mode_count, nagumo_c=nagumo_c)
