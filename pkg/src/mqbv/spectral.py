"""Sine-basis realization of L2(0, pi) with the Dirichlet Laplacian.

Functions are stored as coefficient vectors ``c_p = <u, phi_p>`` against the
orthonormal eigenfunctions ``phi_p(x) = sqrt(2/pi) sin(p x)``, whose
eigenvalues are ``lambda_p = p**2``.  Everything the operator calculus needs
(semigroup, fractional powers, Gevrey weights) is diagonal in this basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, DomainError

# Largest x with exp(x) finite in double precision.
LOG_MAX = math.log(np.finfo(float).max)

DEFAULT_MODES = 64
DEFAULT_COLLOCATION = 256


def eigenvalues(mode_count: int) -> np.ndarray:
    """Return ``lambda_p = p**2`` for ``p = 1..mode_count``."""
    p = np.arange(1, mode_count + 1, dtype=float)
    return p * p


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A function in L2(0, pi) given by its sine-basis coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionError(f"coefficient vector must be 1-D and non-empty, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, mode_count: int) -> "SpectralField":
        return cls(np.zeros(mode_count))

    @classmethod
    def unit(cls, mode_count: int, mode: int, amplitude: float = 1.0) -> "SpectralField":
        """Field equal to ``amplitude * phi_mode`` (modes are 1-based)."""
        c = np.zeros(mode_count)
        c[mode - 1] = amplitude
        return cls(c)

    @property
    def mode_count(self) -> int:
        return self.coeffs.size

    def __len__(self):
        return self.coeffs.size

    def __eq__(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        return bool(np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_size(self, other)
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_size(self, other)
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * float(scalar))

    __rmul__ = __mul__


def _check_same_size(a: SpectralField, b: SpectralField):
    if a.mode_count != b.mode_count:
        raise DimensionError(f"mode counts differ: {a.mode_count} vs {b.mode_count}")


@dataclass(frozen=True)
class GevreyParams:
    """Order ``s >= 0`` (the weight power of lambda) and index ``sigma > 0``."""

    order: float
    index: float

    def __post_init__(self):
        if not self.order >= 0:
            raise DomainError(f"Gevrey order must be >= 0, got {self.order}")
        if not self.index > 0:
            raise DomainError(f"Gevrey index must be > 0, got {self.index}")


class EigenBasis:
    """Truncated sine eigenbasis with a uniform collocation grid.

    The grid is ``x_j = j*pi/M`` for ``j = 0..M-1``.  Analysis uses the
    composite trapezoid rule on the ``M + 1`` nodes of ``[0, pi]``; the
    endpoint terms drop out because every ``phi_p`` vanishes there, so the
    node at ``x = pi`` is never stored.  With ``P < M`` the discrete sine
    functions are exactly orthonormal under this rule.
    """

    def __init__(self, mode_count: int = DEFAULT_MODES, collocation_count: int | None = None):
        if collocation_count is None:
            collocation_count = max(DEFAULT_COLLOCATION, 2 * mode_count)
        if mode_count < 1:
            raise DomainError(f"mode_count must be positive, got {mode_count}")
        if collocation_count < 2 * mode_count:
            raise DomainError(
                f"collocation_count={collocation_count} must be >= 2*mode_count={2 * mode_count}"
            )
        self.mode_count = int(mode_count)
        self.collocation_count = int(collocation_count)
        self.eigenvalues = eigenvalues(self.mode_count)
        self.spacing = math.pi / self.collocation_count
        self.grid = np.arange(self.collocation_count) * self.spacing
        p = np.arange(1, self.mode_count + 1)
        # rows: grid points, columns: modes
        self._phi = math.sqrt(2.0 / math.pi) * np.sin(np.outer(self.grid, p))
        self._phi.setflags(write=False)

    def __repr__(self):
        return f"EigenBasis(mode_count={self.mode_count}, collocation_count={self.collocation_count})"

    @property
    def eigenfunctions(self) -> np.ndarray:
        """Matrix of ``phi_p(x_j)``, shape ``(M, P)``."""
        return self._phi

    def analyze_many(self, samples: np.ndarray) -> np.ndarray:
        """Project grid samples (last axis of length M) onto the basis."""
        samples = np.asarray(samples, dtype=float)
        if samples.shape[-1] != self.collocation_count:
            raise DimensionError(
                f"expected {self.collocation_count} samples on the last axis, got {samples.shape[-1]}"
            )
        return self.spacing * (samples @ self._phi)

    def synthesize_many(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.mode_count:
            raise DimensionError(f"expected {self.mode_count} coefficients, got {coeffs.shape[-1]}")
        return coeffs @ self._phi.T

    def analyze(self, samples) -> SpectralField:
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 1:
            raise DimensionError(f"analyze expects a 1-D sample vector, got shape {samples.shape}")
        return SpectralField(self.analyze_many(samples))

    def synthesize(self, field: SpectralField) -> np.ndarray:
        return self.synthesize_many(field.coeffs)

    def gram(self) -> np.ndarray:
        """Discrete Gram matrix of the eigenfunctions under the trapezoid rule."""
        return self.spacing * (self._phi.T @ self._phi)

    def collocation_norm(self, samples) -> float:
        """Trapezoid-rule L2 norm of grid samples (Dirichlet endpoints)."""
        samples = np.asarray(samples, dtype=float)
        # the x=0 sample carries half weight; the implicit x=pi node carries none
        weighted = np.sum(samples[1:] ** 2) + 0.5 * samples[0] ** 2
        return math.sqrt(self.spacing * weighted)


def semigroup_apply(field: SpectralField, t: float) -> SpectralField:
    """Apply ``S(t) = exp(-t A)``."""
    if not t >= 0:
        raise DomainError(f"semigroup time must be >= 0, got {t}")
    lam = eigenvalues(field.mode_count)
    return SpectralField(np.exp(-t * lam) * field.coeffs)


def apply_operator_power(field: SpectralField, r: float) -> SpectralField:
    """Apply ``A**r`` for ``r >= 0``."""
    if not r >= 0:
        raise DomainError(f"operator power must be >= 0, got {r}")
    lam = eigenvalues(field.mode_count)
    return SpectralField(lam**r * field.coeffs)


def gevrey_norm(field: SpectralField, params: GevreyParams) -> float:
    """Norm ``sqrt(sum lambda**s exp(2 sigma lambda) c**2)``.

    Evaluated in the log domain; returns ``math.inf`` when the result is not
    representable, instead of overflowing somewhere in the middle.
    """
    c = field.coeffs
    nz = c != 0
    if not nz.any():
        return 0.0
    lam = eigenvalues(field.mode_count)[nz]
    log_terms = params.order * np.log(lam) + 2.0 * params.index * lam + 2.0 * np.log(np.abs(c[nz]))
    log_norm = 0.5 * float(logsumexp(log_terms))
    if log_norm > LOG_MAX:
        return math.inf
    return math.exp(log_norm)
