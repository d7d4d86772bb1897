import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mqbv.errors import DomainError
from mqbv.filters import (
    FilterParams,
    check_lemma1,
    check_lemma2,
    check_lemma3,
    lemma1_bound,
    lemma2_bound,
    lemma3_bound,
    lemma3_bound_general,
    phi_filter,
    phi_values,
)
from mqbv.problem import DiffusionProfile, mu_bar


@pytest.mark.parametrize("delta", [0.1, 1e-3, 1e-6])
def test_phi_unit_example(unit_profile, delta):
    expected = 1.0 / (delta + math.exp(-1.0))
    assert phi_filter(FilterParams(delta), unit_profile, 1.0, 0.0, 1.0) == pytest.approx(expected, rel=1e-12)


def test_phi_matches_textbook_form(affine_profile, rng):
    total = mu_bar(affine_profile, 0.0, 1.0)
    for _ in range(50):
        t, s = sorted(rng.uniform(0, 1, 2))
        lam = rng.uniform(0, 30)
        delta, k = 10.0 ** rng.uniform(-6, -1), rng.uniform(1, 3)
        direct = math.exp((mu_bar(affine_profile, t, s) - total) * lam) / (delta * lam**k + math.exp(-total * lam))
        got = phi_filter(FilterParams(delta, k), affine_profile, s, t, lam)
        assert got == pytest.approx(direct, rel=1e-11)


@pytest.mark.parametrize("delta,k", [(0.5, 1.0), (1e-3, 2.0), (1e-8, 3.0)])
def test_phi_at_zero_lambda_is_one(unit_profile, delta, k):
    for s, t in [(1.0, 0.0), (0.5, 0.5), (0.7, 0.2)]:
        assert phi_filter(FilterParams(delta, k), unit_profile, s, t, 0.0) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1e6), st.floats(1e-9, 0.99), st.floats(1.0, 4.0))
def test_phi_diagonal_at_most_one(t, lam, delta, k):
    prof = DiffusionProfile.affine()
    assert phi_filter(FilterParams(delta, k), prof, t, t, lam) <= 1.0


def test_phi_finite_for_huge_lambda(unit_profile, affine_profile):
    lam = np.logspace(0, 8, 200)
    for prof in (unit_profile, affine_profile):
        total = mu_bar(prof, 0.0, 1.0)
        for s, t in [(1.0, 0.0), (0.5, 0.25), (1.0, 1.0)]:
            vals = phi_values(FilterParams(1e-6, 2.0), mu_bar(prof, t, s), total, lam)
            assert np.all(np.isfinite(vals)) and np.all(vals >= 0)


def test_phi_tends_to_backward_kernel(affine_profile):
    total = mu_bar(affine_profile, 0.0, 1.0)
    s, t = 0.8, 0.1
    mts = mu_bar(affine_profile, t, s)
    for lam in (0.5, 1.0, 4.0, 9.0):
        for delta in (1e-4, 1e-6, 1e-8, 1e-10):
            for k in (1.0, 2.0):
                prod = delta * lam**k * math.exp(total * lam)
                if prod > 0.5:
                    continue
                val = phi_filter(FilterParams(delta, k), affine_profile, s, t, lam)
                limit = math.exp(mts * lam)
                assert abs(val - limit) / limit <= 2 * prod


@pytest.mark.parametrize("s,t,lam", [(0.3, 0.5, 1.0), (1.2, 0.0, 1.0), (1.0, -0.1, 1.0), (1.0, 0.0, -1.0)])
def test_phi_domain(unit_profile, s, t, lam):
    with pytest.raises(DomainError):
        phi_filter(FilterParams(0.1), unit_profile, s, t, lam)


@pytest.mark.parametrize("delta,k", [(0.0, 1.0), (1.0, 1.0), (-0.1, 1.0), (0.1, 0.5)])
def test_filter_params_validation(delta, k):
    with pytest.raises(DomainError):
        FilterParams(delta, k)


def test_filter_params_log_argument(unit_profile):
    assert FilterParams(1e-3).log_argument(unit_profile) == pytest.approx(math.log(1000))
    with pytest.raises(DomainError):
        FilterParams(0.6, 2.0).check(unit_profile)  # 1 / 1.2 < 1


def test_lemma1_examples():
    assert lemma1_bound(0.01, 1, 1) == pytest.approx(100 / math.log(100), rel=1e-14)
    assert lemma1_bound(0.01, 1, 1) == pytest.approx(21.7147, abs=5e-5)
    assert lemma1_bound(0.3, 1, 1) == pytest.approx((1 / 0.3) / math.log(10 / 3), rel=1e-14)
    assert lemma1_bound(0.3, 1, 1) == pytest.approx(2.7686, abs=5e-5)
    with pytest.raises(DomainError):
        lemma1_bound(0.5, 1.0, 2.0)  # M^k/(k delta) = 1
    with pytest.raises(DomainError):
        lemma1_bound(0.1, 1.0, 0.5)


def test_lemma2_examples():
    assert lemma2_bound(0.01, 1, 1, 0.5) == pytest.approx(10 / math.sqrt(math.log(100)), rel=1e-14)
    assert lemma2_bound(0.01, 1, 1, 0.5) == pytest.approx(4.660, abs=5e-4)
    for delta, M, k in [(1e-3, 2.0, 1.5), (1e-6, 0.5, 3.0)]:
        assert lemma2_bound(delta, M, k, M) == pytest.approx(1.0, rel=1e-14)
        assert lemma2_bound(delta, M, k, 0.0) == pytest.approx(lemma1_bound(delta, M, k), rel=1e-12)
    with pytest.raises(DomainError):
        lemma2_bound(0.01, 1, 1, 1.5)


def test_lemma3_examples(unit_profile):
    params = FilterParams(1e-3)
    assert lemma3_bound(params, unit_profile, 1.0, 0.0) == pytest.approx(1000 / math.log(1000), rel=1e-14)
    assert lemma3_bound(params, unit_profile, 1.0, 0.0) == pytest.approx(144.76, abs=5e-3)
    assert lemma3_bound(params, unit_profile, 0.4, 0.4) == 1.0
    with pytest.raises(DomainError):
        lemma3_bound(params, unit_profile, 0.2, 0.4)


def test_lemma3_general_reduces_for_constant(unit_profile):
    params = FilterParams(1e-4, 2.0)
    assert lemma3_bound_general(params, unit_profile, 0.9, 0.1) == lemma3_bound(params, unit_profile, 0.9, 0.1)


def test_lemma3_random_tuples_constant(unit_profile, rng):
    total = 1.0
    n = 10_000
    t = rng.uniform(0, 1, n)
    s = t + rng.uniform(0, 1, n) * (1 - t)
    lam = 10.0 ** rng.uniform(-6, 6, n)
    delta = 10.0 ** rng.uniform(-8, -1, n)
    for k in (1.0, 2.0):
        vals = [phi_values(FilterParams(d, k), si - ti, total, li) for d, si, ti, li in zip(delta, s, t, lam)]
        bounds = [lemma3_bound(FilterParams(d, k), unit_profile, si, ti) for d, si, ti in zip(delta, s, t)]
        assert np.all(np.array(vals) <= np.array(bounds) * (1 + 1e-12))


def test_lemma3_stated_form_fails_for_time_dependent_mu(affine_profile):
    # p < q: the uniform bound as stated is too small near s = T, t = 0
    params = FilterParams(1e-3)
    lam = np.linspace(0.01, 20, 20001)
    total = mu_bar(affine_profile, 0.0, 1.0)
    peak = np.max(phi_values(params, total, total, lam))
    assert peak > lemma3_bound(params, affine_profile, 1.0, 0.0)
    assert peak <= lemma3_bound_general(params, affine_profile, 1.0, 0.0)


@pytest.mark.parametrize("check", [check_lemma1, check_lemma2])
def test_lemma12_suites_clean(check):
    cells, skipped = check()
    assert skipped == 1  # delta=0.1, M=0.5, k=3 has M^k/(k delta) < 1
    assert len(cells) == 127
    assert all(c.ok and c.samples >= 10_000 for c in cells)
    assert max(c.worst_ratio for c in cells) <= 1.0 + 1e-12


def test_lemma3_suite(unit_profile, affine_profile):
    cells, _ = check_lemma3(unit_profile)
    assert cells and all(c.ok for c in cells)
    cells, _ = check_lemma3(affine_profile, general=True)
    assert all(c.ok for c in cells)
    cells, _ = check_lemma3(affine_profile)
    assert any(not c.ok for c in cells)


def test_bound_scale_forces_violations(unit_profile):
    cells, _ = check_lemma1(bound_scale=0.5)
    assert any(not c.ok for c in cells)
    cells, _ = check_lemma3(unit_profile, bound_scale=0.5)
    assert any(not c.ok for c in cells)
