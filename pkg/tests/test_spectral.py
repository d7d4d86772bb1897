import math

import numpy as np
import pytest
from scipy import integrate

from mqbv.errors import DimensionError, DomainError
from mqbv.spectral import (
    EigenBasis,
    GevreyParams,
    SpectralField,
    apply_operator_power,
    eigenvalues,
    gevrey_norm,
    semigroup_apply,
)

SQRT_HALF_PI = math.sqrt(math.pi / 2)


def test_eigenvalues_are_squares():
    lam = eigenvalues(6)
    assert lam.tolist() == [1, 4, 9, 16, 25, 36]
    assert np.all(np.diff(eigenvalues(64)) > 0)


@pytest.mark.parametrize("P,M", [(8, 16), (8, 64), (64, 256), (100, 200)])
def test_discrete_gram_is_identity(P, M):
    gram = EigenBasis(P, M).gram()
    assert np.max(np.abs(gram - np.eye(P))) <= 1e-10


def test_collocation_needs_two_points_per_mode():
    with pytest.raises(DomainError):
        EigenBasis(64, 100)
    with pytest.raises(DomainError):
        EigenBasis(0)


def test_default_collocation():
    assert EigenBasis(64).collocation_count == 256
    assert EigenBasis(200).collocation_count == 400


def test_analyze_sine(basis64):
    c = basis64.analyze(np.sin(basis64.grid)).coeffs
    assert c[0] == pytest.approx(SQRT_HALF_PI, rel=1e-13)
    assert np.max(np.abs(c[1:])) <= 1e-13


def test_analyze_zero(basis64):
    assert not np.any(basis64.analyze(np.zeros(256)).coeffs)


def test_analyze_two_sines_against_quadrature():
    basis = EigenBasis(16, 512)
    f = lambda x: np.sin(x) + 2 * np.sin(3 * x)
    c = basis.analyze(f(basis.grid)).coeffs
    oracle = [
        integrate.quad(lambda x: f(x) * math.sqrt(2 / math.pi) * math.sin(p * x), 0, math.pi, epsabs=1e-13)[0]
        for p in range(1, 17)
    ]
    np.testing.assert_allclose(c, oracle, atol=1e-12)
    assert c[2] == pytest.approx(2 * SQRT_HALF_PI, rel=1e-13)


def test_analyze_rejects_wrong_length(basis64):
    with pytest.raises(DimensionError):
        basis64.analyze(np.zeros(100))
    with pytest.raises(DimensionError):
        basis64.analyze(np.zeros((2, 256)))


def test_synthesize_unit_mode(basis64):
    samples = basis64.synthesize(SpectralField.unit(64, 1))
    np.testing.assert_allclose(samples, math.sqrt(2 / math.pi) * np.sin(basis64.grid), atol=1e-15)
    assert not np.any(basis64.synthesize(SpectralField.zeros(64)))


@pytest.mark.parametrize("P,M", [(8, 64), (32, 64), (64, 256)])
def test_round_trip(P, M, rng):
    basis = EigenBasis(P, M)
    c = rng.standard_normal(P)
    back = basis.analyze(basis.synthesize(SpectralField(c))).coeffs
    assert np.max(np.abs(back - c)) <= 1e-12 * np.max(np.abs(c))


def test_batched_transforms_match_single(basis64, rng):
    C = rng.standard_normal((5, 64))
    S = basis64.synthesize_many(C)
    for row, s in zip(C, S):
        np.testing.assert_allclose(s, basis64.synthesize(SpectralField(row)), rtol=0, atol=1e-14)
    np.testing.assert_allclose(basis64.analyze_many(S), C, atol=1e-12)


def test_parseval(basis64, rng):
    c = rng.standard_normal(64) / np.arange(1, 65)
    samples = basis64.synthesize(SpectralField(c))
    assert basis64.collocation_norm(samples) == pytest.approx(np.linalg.norm(c), rel=1e-10)
    assert basis64.analyze(samples).norm() == pytest.approx(basis64.collocation_norm(samples), rel=1e-10)


def test_field_is_read_only_value():
    src = np.array([1.0, 2.0])
    f = SpectralField(src)
    src[0] = 99.0
    assert f.coeffs[0] == 1.0
    with pytest.raises(ValueError):
        f.coeffs[0] = 3.0


def test_field_arithmetic():
    a, b = SpectralField([1.0, 2.0]), SpectralField([0.5, -1.0])
    assert (a + b).coeffs.tolist() == [1.5, 1.0]
    assert (a - b).coeffs.tolist() == [0.5, 3.0]
    assert (2 * a).coeffs.tolist() == [2.0, 4.0]
    assert a.norm() == pytest.approx(math.sqrt(5))
    with pytest.raises(DimensionError):
        a + SpectralField([1.0])
    with pytest.raises(DimensionError):
        SpectralField([])


def test_semigroup_examples():
    f = SpectralField.unit(4, 1)
    assert semigroup_apply(f, 1.0).coeffs[0] == pytest.approx(0.3678794412, rel=1e-10)
    g = SpectralField([1.0, -2.0, 3.0])
    assert semigroup_apply(g, 0.0) == g
    with pytest.raises(DomainError):
        semigroup_apply(g, -0.1)


@pytest.mark.parametrize("t1,t2", [(0.0, 0.3), (0.1, 0.2), (0.5, 1.5)])
def test_semigroup_law_and_contraction(t1, t2, rng):
    u = SpectralField(rng.standard_normal(64))
    two = semigroup_apply(semigroup_apply(u, t1), t2).coeffs
    one = semigroup_apply(u, t1 + t2).coeffs
    assert np.max(np.abs(two - one)) <= 1e-12
    assert semigroup_apply(u, t1 + t2).norm() <= u.norm() * (1 + 1e-14)


def test_operator_power():
    f = SpectralField.unit(3, 2, 1.5)
    assert apply_operator_power(f, 1.0).coeffs[1] == 6.0
    assert apply_operator_power(f, 0.0) == f
    with pytest.raises(DomainError):
        apply_operator_power(f, -1.0)


@pytest.mark.parametrize("r,t", [(0.5, 0.01), (1.0, 0.2), (2.0, 1.0)])
def test_power_commutes_with_semigroup(r, t, rng):
    u = SpectralField(rng.standard_normal(16))
    a = semigroup_apply(apply_operator_power(u, r), t).coeffs
    b = apply_operator_power(semigroup_apply(u, t), r).coeffs
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


def test_gevrey_norm_examples():
    params = GevreyParams(2.0, 1.0)
    assert gevrey_norm(SpectralField.zeros(5), params) == 0.0
    assert gevrey_norm(SpectralField.unit(5, 1), params) == pytest.approx(math.e, rel=1e-14)
    assert gevrey_norm(SpectralField.unit(5, 1, math.e), params) == pytest.approx(math.e**2, rel=1e-14)


def test_gevrey_norm_against_direct_sum(rng):
    c = rng.standard_normal(6)
    lam = np.arange(1, 7) ** 2.0
    direct = math.sqrt(np.sum(lam**1.5 * np.exp(2 * 0.3 * lam) * c**2))
    assert gevrey_norm(SpectralField(c), GevreyParams(1.5, 0.3)) == pytest.approx(direct, rel=1e-13)


def test_gevrey_norm_small_index_is_h_norm(rng):
    u = SpectralField(rng.standard_normal(64))
    assert gevrey_norm(u, GevreyParams(0.0, 1e-12)) == pytest.approx(u.norm(), rel=1e-8)


def test_gevrey_norm_overflow_is_flagged():
    val = gevrey_norm(SpectralField.unit(64, 64), GevreyParams(2.0, 1.0))
    assert val == math.inf
    # a tiny coefficient can bring a huge weight back into range
    assert math.isfinite(gevrey_norm(SpectralField.unit(30, 20, 1e-300), GevreyParams(0.0, 1.0)))


@pytest.mark.parametrize("order,index", [(-1.0, 1.0), (1.0, 0.0), (0.0, -2.0)])
def test_gevrey_params_validation(order, index):
    with pytest.raises(DomainError):
        GevreyParams(order, index)
