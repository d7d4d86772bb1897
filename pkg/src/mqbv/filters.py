"""Regularizing filter and its explicit bounds.

The filter replacing the unbounded backward kernel ``exp(mu_bar(t, s) lam)``
is

    Phi(s, t; lam) = exp((mu_bar(t, s) - mu_bar(0, T)) lam)
                     / (delta lam**k + exp(-mu_bar(0, T) lam)),

evaluated here as ``exp(mu_bar(t, s) lam - log1p(delta lam**k exp(mu_bar(0, T) lam)))``
with the log1p taken through ``logaddexp`` so that neither the tiny
``exp(-mu_bar lam)`` nor the huge ``exp(+mu_bar lam)`` is ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .problem import DiffusionProfile, mu_bar


@dataclass(frozen=True)
class FilterParams:
    """Regularization pair: noise level ``delta`` in (0, 1), filter order ``k >= 1``."""

    delta: float
    order: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.order >= 1.0:
            raise DomainError(f"filter order k must be >= 1, got {self.order}")

    def log_argument(self, profile: DiffusionProfile) -> float:
        """``ln((T q)^k / (k delta))``; raises unless positive."""
        T, q, k = profile.horizon, profile.upper, self.order
        val = k * math.log(T * q) - math.log(k * self.delta)
        if not val > 0:
            raise DomainError(
                f"(Tq)^k/(k delta) must exceed 1 (T={T}, q={q}, k={k}, delta={self.delta})"
            )
        return val

    def check(self, profile: DiffusionProfile) -> "FilterParams":
        self.log_argument(profile)
        return self


def log_denominator(delta: float, order: float, mbar_total: float, lam) -> np.ndarray:
    """``log(1 + delta lam^k exp(mbar_total lam))``, zero at ``lam = 0``."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore"):
        log_reg = math.log(delta) + order * np.log(lam) + mbar_total * lam
    return np.logaddexp(log_reg, 0.0)


def phi_values(params: FilterParams, mbar_ts, mbar_total: float, lam) -> np.ndarray:
    """Vectorized filter from precomputed ``mu_bar(t, s)`` and ``mu_bar(0, T)``."""
    mbar_ts = np.asarray(mbar_ts, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return np.exp(mbar_ts * lam - log_denominator(params.delta, params.order, mbar_total, lam))


def phi_filter(params: FilterParams, profile: DiffusionProfile, s: float, t: float, lam: float) -> float:
    """The filter ``Phi(s, t; lam)`` for ``0 <= t <= s <= T`` and ``lam >= 0``."""
    if not 0.0 <= t <= s <= profile.horizon:
        raise DomainError(f"phi_filter needs 0 <= t <= s <= T, got s={s}, t={t}")
    if not lam >= 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    total = mu_bar(profile, 0.0, profile.horizon)
    return float(phi_values(params, mu_bar(profile, t, s), total, lam))


def _lemma_log(delta: float, M: float, k: float) -> float:
    if not (delta > 0 and M > 0 and k >= 1):
        raise DomainError(f"need delta > 0, M > 0, k >= 1; got delta={delta}, M={M}, k={k}")
    val = k * math.log(M) - math.log(k * delta)
    if not val > 0:
        raise DomainError(f"M^k/(k delta) must exceed 1 (delta={delta}, M={M}, k={k})")
    return val


def lemma1_bound(delta: float, M: float, k: float) -> float:
    """Upper bound of ``1 / (delta x^k + exp(-M x))`` over ``x > 0``:
    ``(1/delta) (k M / ln(M^k / (k delta)))^k``."""
    L = _lemma_log(delta, M, k)
    return (k * M / L) ** k / delta


def lemma2_bound(delta: float, M: float, k: float, a: float) -> float:
    """Upper bound of ``exp(-a x) / (delta x^k + exp(-M x))`` for ``0 <= a <= M``."""
    L = _lemma_log(delta, M, k)
    if not 0.0 <= a <= M:
        raise DomainError(f"need 0 <= a <= M, got a={a}, M={M}")
    r = a / M
    return (k * M) ** (k * (1.0 - r)) * delta ** (r - 1.0) * L ** (k * (r - 1.0))


def lemma3_bound(params: FilterParams, profile: DiffusionProfile, s: float, t: float) -> float:
    """Uniform-in-lambda bound on ``Phi(s, t; .)``:
    ``(kTq)^{kp(s-t)/(qT)} delta^{p(t-s)/(qT)} ln((Tq)^k/(k delta))^{-kp(s-t)/(qT)}``.

    Valid when ``mu`` is constant (``p == q``); see :func:`lemma3_bound_general`.
    """
    T, p, q, k = profile.horizon, profile.lower, profile.upper, params.order
    if not 0.0 <= t <= s <= T:
        raise DomainError(f"lemma3_bound needs 0 <= t <= s <= T, got s={s}, t={t}")
    L = params.log_argument(profile)
    e = p * (s - t) / (q * T)
    return (k * T * q) ** (k * e) * params.delta ** (-e) * L ** (-k * e)


def lemma3_bound_general(params: FilterParams, profile: DiffusionProfile, s: float, t: float) -> float:
    """Bound on ``Phi(s, t; .)`` that also holds when ``p < q``.

    The numerator is bounded through ``mu_bar(0, T) - mu_bar(t, s) >= p (T - (s - t))``,
    which brings an extra factor ``(kTq)^{k(1-p/q)} delta^{p/q-1} L^{k(p/q-1)}``
    relative to :func:`lemma3_bound`; the two agree when ``p == q``.
    """
    T, p, q = profile.horizon, profile.lower, profile.upper
    base = lemma3_bound(params, profile, s, t)
    if p == q:
        return base
    L = params.log_argument(profile)
    k = params.order
    gap = 1.0 - p / q
    return base * (k * T * q) ** (k * gap) * params.delta ** (-gap) * L ** (-k * gap)


# -- sampling checks of the bounds ---------------------------------------------

# Relative slack for comparing a sampled value with a bound it may touch.
LEMMA_RTOL = 1e-12

LEMMA_DELTAS = tuple(10.0**-j for j in range(1, 9))
LEMMA_MS = (0.5, 1.0, 2.0, 5.0)
LEMMA_KS = (1.0, 1.5, 2.0, 3.0)


@dataclass(frozen=True)
class LemmaCell:
    """Outcome of one sampling cell: the worst ``value / bound`` seen."""

    lemma: int
    delta: float
    k: float
    M: float
    s: float
    t: float
    samples: int
    worst_ratio: float
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def _log_spaced(samples: int, lo: float = 1e-6, hi: float = 1e6) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), samples)


def _tally(log_vals: np.ndarray, log_bound) -> tuple[float, int]:
    excess = log_vals - log_bound
    return float(np.exp(excess.max())), int(np.count_nonzero(excess > math.log1p(LEMMA_RTOL)))


def check_lemma1(deltas=LEMMA_DELTAS, Ms=LEMMA_MS, ks=LEMMA_KS, samples: int = 10_000,
                 bound_scale: float = 1.0) -> tuple[list, int]:
    """Sample ``1/(delta x^k + exp(-M x))`` on log-spaced ``x`` in ``(1e-6, 1e6)``.

    Returns the checked cells and the number of skipped cells (those with
    ``M^k/(k delta) <= 1``, where the bound is undefined).
    """
    x = _log_spaced(samples)
    cells, skipped = [], 0
    for delta in deltas:
        for M in Ms:
            for k in ks:
                try:
                    bound = lemma1_bound(delta, M, k) * bound_scale
                except DomainError:
                    skipped += 1
                    continue
                log_g = -np.logaddexp(math.log(delta) + k * np.log(x), -M * x)
                worst, bad = _tally(log_g, math.log(bound))
                cells.append(LemmaCell(1, delta, k, M, math.nan, math.nan, samples, worst, bad))
    return cells, skipped


def check_lemma2(deltas=LEMMA_DELTAS, Ms=LEMMA_MS, ks=LEMMA_KS, samples: int = 10_000,
                 bound_scale: float = 1.0, seed: int = 0) -> tuple[list, int]:
    """Sample ``exp(-a x)/(delta x^k + exp(-M x))`` with ``a`` uniform on ``[0, M]``."""
    x = _log_spaced(samples)
    rng = np.random.default_rng(seed)
    cells, skipped = [], 0
    for delta in deltas:
        for M in Ms:
            for k in ks:
                a = rng.uniform(0.0, M, samples)
                try:
                    L = _lemma_log(delta, M, k)
                except DomainError:
                    skipped += 1
                    continue
                r = a / M
                log_bound = (k * (1 - r) * math.log(k * M) + (r - 1) * math.log(delta)
                             + k * (r - 1) * math.log(L) + math.log(bound_scale))
                log_g = -a * x - np.logaddexp(math.log(delta) + k * np.log(x), -M * x)
                worst, bad = _tally(log_g, log_bound)
                cells.append(LemmaCell(2, delta, k, M, math.nan, math.nan, samples, worst, bad))
    return cells, skipped


def check_lemma3(profile: DiffusionProfile, deltas=LEMMA_DELTAS, ks=LEMMA_KS, samples: int = 10_000,
                 pairs: int = 8, bound_scale: float = 1.0, seed: int = 0,
                 general: bool = False) -> tuple[list, int]:
    """Sample ``Phi(s, t; lam)`` for ``lam`` in ``{0} U (1e-6, 1e6]`` on random
    admissible ``(s, t)`` pairs plus ``(T, 0)`` and ``(T, T)``.

    With ``general`` the bound of :func:`lemma3_bound_general` is used.
    """
    T = profile.horizon
    rng = np.random.default_rng(seed)
    st = rng.uniform(0.0, T, (pairs, 2))
    st.sort(axis=1)
    pair_list = [(T, 0.0), (T, T)] + [(float(s), float(t)) for t, s in st]
    lam = np.concatenate([[0.0], _log_spaced(samples - 1)])
    total = mu_bar(profile, 0.0, T)
    mbars = [mu_bar(profile, t, s) for s, t in pair_list]
    bound_fn = lemma3_bound_general if general else lemma3_bound
    cells, skipped = [], 0
    for delta in deltas:
        for k in ks:
            params = FilterParams(delta, k)
            try:
                params.log_argument(profile)
            except DomainError:
                skipped += 1
                continue
            for (s, t), mb in zip(pair_list, mbars):
                bound = bound_fn(params, profile, s, t) * bound_scale
                log_phi = mb * lam - log_denominator(delta, k, total, lam)
                worst, bad = _tally(log_phi, math.log(bound))
                cells.append(LemmaCell(3, delta, k, math.nan, s, t, samples, worst, bad))
    return cells, skipped
