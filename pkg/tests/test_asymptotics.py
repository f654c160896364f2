import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gasketlab import DomainError
from gasketlab.asymptotics import (
    LifschitzTailFit,
    StretchedExponentialFit,
    certificate_bound,
    certificate_constant,
    dirichlet_corner_eigenvalue,
    fit_stretched_exponential,
    lambda_bm_estimate,
    lifschitz_slope,
    lower_bound_certificate,
    m0_scale,
    sandwich_bounds,
    tauberian_convert,
    volume_constant,
)
from gasketlab.geometry import constants
from gasketlab.ids import LaplaceCurve

C1 = constants(1.0)
GAMMA = C1.gamma


def test_m0_scale_examples():
    assert m0_scale(1.0, 1.0, 1.0) == 0
    assert m0_scale(1000.0, 1.0, 1.0) == 3
    assert math.log2(1000) / C1.d_alpha == pytest.approx(3.63, abs=0.01)
    assert m0_scale(2**C1.d_alpha, 1.0, 1.0) == 1
    assert m0_scale(2 ** (2 * C1.d_alpha) * 3.0, 3.0, 1.0) == 2


@given(st.floats(1e-3, 1e6), st.floats(1e-3, 1e3))
def test_m0_scale_bracket(t, nu):
    M0 = m0_scale(t, nu, 1.0)
    r = (t / nu) ** (1 / C1.d_alpha)
    assert 2.0**M0 <= r * (1 + 1e-9) and r < 2.0 ** (M0 + 1)


def test_tauberian_examples():
    assert tauberian_convert(0.5) == 1.0
    assert tauberian_convert(GAMMA) == pytest.approx(1.365212, abs=1e-6)
    for alpha in (0.5, 1.0, 1.5):
        c = constants(alpha)
        assert abs(tauberian_convert(c.d_f / c.d_alpha) - c.d_s / alpha) <= 1e-12
    assert tauberian_convert(0.6) > tauberian_convert(0.55)
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(DomainError):
            tauberian_convert(bad)


def test_fit_exact_synthetic():
    t = np.geomspace(1, 1000, 30)
    rep = fit_stretched_exponential((t, np.exp(-2 * t**0.5772)), 0.5772)
    assert rep.constant == pytest.approx(2.0, abs=1e-6)
    assert rep.r2 == pytest.approx(1.0, abs=1e-12)
    assert rep.window[0] >= np.median(t)
    wrong = fit_stretched_exponential((t, np.exp(-2 * t**0.5772)), 0.6772)
    assert wrong.r2 < rep.r2


def test_fit_unbiased_on_noisy_synthetic():
    rng = np.random.default_rng(0)
    t = np.geomspace(1, 500, 40)
    y = np.exp(-1.7 * t**GAMMA + 0.3) * np.exp(rng.normal(0, 1e-3, len(t)))
    assert fit_stretched_exponential((t, y), GAMMA).constant == pytest.approx(1.7, rel=0.01)


def test_fit_estimator_api_and_errors():
    t = np.geomspace(1, 100, 10)
    est = StretchedExponentialFit(GAMMA).fit(t, np.exp(-t**GAMMA))
    assert est.score(t, np.exp(-t**GAMMA)) == pytest.approx(1.0)
    assert np.allclose(est.predict([1.0]), math.exp(-1), rtol=1e-8)
    with pytest.raises(DomainError):
        StretchedExponentialFit(GAMMA).fit(t, -np.ones(10))
    with pytest.raises(DomainError):
        StretchedExponentialFit(1.5).fit(t, np.ones(10))


def test_lambda_bm_extrapolation_stable():
    a, b = lambda_bm_estimate(5), lambda_bm_estimate(6)
    assert abs(certificate_constant(a.value, 1.0) / certificate_constant(b.value, 1.0) - 1) < 0.05
    # the depth-m eigenvalues converge geometrically in 5**-m
    e = [dirichlet_corner_eigenvalue(m) for m in (3, 4, 5)]
    assert abs(e[2] - e[1]) < abs(e[1] - e[0])


def test_certificate_self_test():
    t = np.geomspace(2**C1.d_alpha, 2 ** (3 * C1.d_alpha) * 0.999, 12)
    args = dict(nu=1.0, a=0.125, alpha=1.0, c_vol=2.0)
    lam = 10.0
    exact = LaplaceCurve(t, np.exp(certificate_bound(t, certificate_constant(lam, 1.0), **args)), np.zeros(12), {"M": 3})
    rep = lower_bound_certificate(exact, lam, M=3, **args)
    assert np.allclose(rep.margin[rep.covered], 0, atol=1e-12)
    assert rep.holds


def test_certificate_obstacle_free_limit():
    t = np.geomspace(1.0, 2 ** (3 * C1.d_alpha) * 1e-6 * 0.99, 15)
    curve = LaplaceCurve(t, np.full(15, 0.9), np.zeros(15), {"M": 3})
    nu = 1e-6
    rep = lower_bound_certificate(curve, 10.0, nu, 0.125, 1.0, 2.0)
    assert rep.covered.any() and rep.holds


def test_certificate_excludes_small_times():
    t = np.array([0.5, 1.0, 8.0])
    curve = LaplaceCurve(t, np.array([1e-300, 1e-300, 0.5]), np.zeros(3), {"M": 3})
    rep = lower_bound_certificate(curve, 10.0, 1.0, 0.125, 1.0, 2.0)
    assert list(rep.covered) == [False, False, True]


def test_volume_constant_positive():
    c = volume_constant(2, 4, 0.25, 6)
    assert 0 < c < 20


def test_sandwich_bounds():
    lo, hi = sandwich_bounds(1.0, 1.0, 8.0, 2 ** -C1.d_alpha)
    assert lo == pytest.approx(1 / 3) and hi == 8.0
    lo2, _ = sandwich_bounds(1.0, 2.0, 8.0, 2 ** -C1.d_alpha)
    assert lo2 / lo == pytest.approx(2**C1.nu_exponent)


def test_lifschitz_synthetic_stretched():
    target = -C1.d_s
    lam = np.geomspace(0.5, 20, 40)
    l = np.exp(-(lam**target))
    count = np.full(40, 100)
    rep = lifschitz_slope(lam, l, 1.0, count, upper_level=1.0)
    assert rep.slope == pytest.approx(target, abs=1e-10)
    assert rep.extra["stretched"]


def test_lifschitz_polynomial_rejected():
    lam = np.geomspace(1e-3, 0.5, 40)
    l = lam ** (C1.d_s / 2)
    rep = lifschitz_slope(lam, l, 1.0, np.full(40, 100))
    assert not rep.extra["stretched"]
    assert abs(rep.slope) < 0.5 * abs(rep.target)


def test_lifschitz_empty_window():
    with pytest.raises(DomainError):
        LifschitzTailFit(1.0).fit([1.0, 2.0], [0.9, 0.95], [100, 100])
