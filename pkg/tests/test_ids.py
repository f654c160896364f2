import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from gasketlab import DomainError
from gasketlab.geometry import constants
from gasketlab.graph import build_graph, fractional_power, laplacian, spectrum
from gasketlab.ids import (
    EmpiricalIDS,
    KilledSpectrum,
    KilledStableIDS,
    averaged_laplace,
    check_enlargement,
    cloud_ensemble,
    ids_cdf,
    killed_brownian_operator,
    killed_operator,
    killed_spectrum,
    laplace_transform,
    min_R,
    search_variational,
    stable_setting,
    trace_laplace,
    variational_functional,
    variational_value,
)
from gasketlab.obstacles import classify_points, cloud_from_points, sample_cloud
from oracles import min_R_oracle, sym_power

T = np.array([0.3, 1.0, 3.0, 10.0])


def test_ids_cdf_examples():
    ids = EmpiricalIDS(KilledSpectrum(np.array([1.0, 2.0])), 1)
    assert ids_cdf(ids, 1.5) == pytest.approx(1 / 3)
    assert ids_cdf(ids, 0.5) == 0
    assert ids_cdf(ids, 2.0) == pytest.approx(2 / 3)  # right-continuous
    assert ids_cdf(ids, 99.0) == pytest.approx(2 / 3)
    with pytest.raises(DomainError):
        ids_cdf(ids, -1.0)


def test_laplace_transform_examples():
    assert laplace_transform(EmpiricalIDS(KilledSpectrum(np.array([1.0])), 0), 1.0) == pytest.approx(math.exp(-1))
    assert laplace_transform(EmpiricalIDS(KilledSpectrum(np.zeros(0)), 0), 1.0) == 0
    with pytest.raises(DomainError):
        laplace_transform(EmpiricalIDS(KilledSpectrum(np.array([1.0])), 0), 0.0)


def test_killed_generator_against_planar_oracle():
    # no obstacles, pad=1: principal submatrix of the power on G^(1)@3
    from oracles import planar_laplacian

    g = build_graph(0, 2)
    op = killed_operator(g, None, 0.25, 1.0, pad=1)
    pts, L = planar_laplacian(3, side=2.0)
    P = sym_power(5.0**2 * L, 0.5)
    lookup = {(round(x, 9), round(y, 9)): k for k, (x, y) in enumerate(pts)}
    amb = stable_setting(0, 2, 1, 1.0)[0]
    idx = [lookup[(round(x, 9), round(y, 9))] for x, y in amb.points[op.support]]
    assert np.allclose(op.matrix, P[np.ix_(idx, idx)], atol=1e-9)
    assert len(op.support) == 13  # 15 vertices minus the two junction corners


def test_full_cover_gives_empty_spectrum():
    g = build_graph(0, 2)
    c = sample_cloud(0, 500.0, 0.25, seed=0)
    s = killed_spectrum(g, c, alpha=1.0, pad=1)
    assert s.is_empty
    assert laplace_transform(EmpiricalIDS(s, 0), 1.0) == 0


def test_single_free_vertex_is_diagonal_entry():
    g = build_graph(0, 2)
    amb, H, interior = stable_setting(0, 2, 1, 1.0)
    # centres at every interior vertex but one, radius below the edge
    keep_pt = (1, 1)  # lattice units of the edge 1/4
    pts = [tuple(p) for p in amb.lattice[interior] if tuple(p) != keep_pt]
    digits = []
    from gasketlab.geometry import vertex_address

    for i, j in pts:
        v = vertex_address(int(i), int(j), -2, 0)
        d = v.digits
        # a vertex address is corner d_k of the cell d_1..d_(k-1); extend by that corner
        digits.append(tuple(d[:-1]) + (d[-1],) * (6 - len(d) + 1))
    c = cloud_from_points(0, 1.0, 0.1, digits, 6)
    s = killed_spectrum(g, c, alpha=1.0, pad=1)
    v = amb.vertex_of(keep_pt)
    assert len(s) == 1
    assert s.eigenvalues[0] == pytest.approx(H.matrix[v, v], rel=1e-12)


def test_trace_identity_random_clouds():
    g = build_graph(1, 3)
    for c in cloud_ensemble(1, 2.0, 0.25, 10, seed=3):
        op = killed_operator(g, c, None, 1.0, 1)
        ids = EmpiricalIDS(killed_spectrum(g, c, None, 1.0, 1), 1)
        for t in T:
            a, b = laplace_transform(ids, t), trace_laplace(op, 1, t)
            assert abs(a - b) <= 1e-10 * max(1.0, abs(b))


def test_chen_song_comparison():
    g = build_graph(1, 3)
    for alpha in (0.5, 1.0, 1.5):
        for c in cloud_ensemble(1, 2.0, 0.25, 6, seed=4):
            s = killed_operator(g, c, None, alpha, 1)
            if s is None:
                continue
            b = killed_brownian_operator(g, c, None, 1)
            assert spectrum(s, 1)[0] <= spectrum(b, 1)[0] ** (alpha / 2) * (1 + 1e-12)


def test_total_mass_and_monotone_cdf():
    g = build_graph(1, 3)
    c = sample_cloud(1, 2.0, 0.25, seed=7)
    s = killed_spectrum(g, c, None, 1.0, 1)
    ids = EmpiricalIDS(s, 1)
    lam = np.linspace(0, s.eigenvalues.max() + 1, 200)
    F = ids_cdf(ids, lam)
    assert np.all(np.diff(F) >= 0)
    assert F[-1] == pytest.approx(len(s) / 3)
    assert np.all(s.eigenvalues >= 0) and np.all(np.diff(s.eigenvalues) >= 0)


def test_estimator_api():
    est = KilledStableIDS(alpha=1.0, M=1, m=3, pad=1, a=0.25, t_grid=tuple(T))
    params = est.get_params()
    assert params["alpha"] == 1.0 and clone(est).get_params() == params
    clouds = cloud_ensemble(1, 2.0, 0.25, 4, seed=0)
    X = est.fit(clouds).transform(clouds)
    assert X.shape == (4, len(T))
    curve = est.laplace_curve()
    assert np.allclose(curve.value, X.mean(axis=0))
    assert curve.is_nonincreasing() and curve.log_convexity_defect() >= -1e-8
    lam, l, count = est.ids_table()
    assert np.all(np.diff(l) > 0) and count[-1] == sum(len(s) for s in est.spectra_)
    with pytest.raises(DomainError):
        KilledStableIDS(alpha=3.0, M=1, m=3).fit(clouds)


def test_nu_zero_is_deterministic():
    curve = averaged_laplace(1, 3, 1, 0.0, 0.25, 1.0, T, 3, seed=1)
    assert np.all(curve.stderr == 0)
    free = killed_spectrum(build_graph(1, 3), None, 0.25, 1.0, 1)
    assert np.allclose(curve.value, laplace_transform(EmpiricalIDS(free, 1), T))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 0.9), st.floats(0.06, 0.25))
def test_antitone_in_nu_and_a(seed, frac, a_small):
    est = KilledStableIDS(1.0, 1, 3, 1, None, tuple(T))
    c = sample_cloud(1, 4.0, 0.25, seed=seed)
    thin, small = c.thin(4.0 * frac), c.with_radius(a_small)
    L, Lt, Ls = est.fit([c]).transform([c, thin, small])
    assert np.all(Lt >= L - 1e-13) and np.all(Ls >= L - 1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_adding_a_center_raises_eigenvalues(seed):
    g = build_graph(1, 3)
    c = sample_cloud(1, 2.0, 0.25, seed=seed)
    extra = sample_cloud(1, 1.0, 0.25, seed=seed + 1)
    a = killed_spectrum(g, c, None, 1.0, 1).eigenvalues
    b = killed_spectrum(g, c.union(extra), None, 1.0, 1).eigenvalues
    assert len(b) <= len(a)
    assert np.all(b >= a[: len(b)] - 1e-10)


def test_laplace_scaling_consistency():
    # nu = 0: 3 L on G^(1)@m at time t equals L on G^(0)@m at time t / 5**(alpha/2)
    for alpha in (0.5, 1.0):
        c = 5.0 ** (alpha / 2)
        one = KilledStableIDS(alpha, 1, 3, 1, 0.25, tuple(T)).fit([None]).laplace_curve().value
        zero = KilledStableIDS(alpha, 0, 3, 1, 0.25, tuple(T / c)).fit([None]).laplace_curve().value
        assert np.allclose(3 * one, zero, rtol=1e-10)


def test_min_R_examples():
    assert min_R(1, 1, 1, 1, 1) == pytest.approx(1 + 6 * math.e, rel=1e-14)
    assert min_R(1, 1, 1, 1, 1) == pytest.approx(17.31, abs=0.005)
    assert min_R(1, 1, 1, 1, 2) == pytest.approx(math.sqrt(1 + 6 * math.e), rel=1e-14)
    assert min_R(1e-12, 1, 1, 1, 1) == pytest.approx(3.0) and min_R(1e-12, 1, 1, 1, 1) > 3.0
    for args in [(0.3, 2.0, 2.0, 0.5, 1.5), (5.0, 0.1, 0.5, 3.0, 0.7)]:
        assert min_R(*args) == pytest.approx(min_R_oracle(*args), rel=1e-14)
    with pytest.raises(DomainError):
        min_R(0, 1, 1, 1, 1)


def test_variational_full_set():
    alpha, m = 1.0, 4
    full = [(d,) for d in range(3)]
    v = variational_value(full, alpha, m)
    assert v == pytest.approx(2 ** -constants(alpha).d_alpha, abs=1e-12)
    val, cells = variational_functional([full, [(0,)], [(0,), (1,)]], alpha, m)
    assert val > 0
    with pytest.raises(DomainError):
        variational_functional([], alpha, m)


def test_variational_search_and_tradeoff():
    res = search_variational(1.0, 3, k=2, n_restarts=2, seed=0)
    assert res.value > 0
    mu = [x[0] for x in res.tradeoff]
    lam = [x[1] for x in res.tradeoff]
    assert np.all(np.diff(mu) > 0)
    assert np.all(np.diff(lam) <= 1e-10)


def test_enlargement_trivial_cases():
    g = build_graph(0, 4)
    c = sample_cloud(0, 6.0, 0.25, seed=1)
    cl = classify_points(c, g, 4.0, 0.5, 0.5, 0.25, 1.0)
    allg = type(cl)(np.ones(len(c), bool), cl.R, 0.25, cl.delta, cl.eps, cl.kappa, cl.R0)
    rep = check_enlargement(g, c, 4.0, 1.0, 0.25, 0.25, 50.0, 1.0, 1.0, classification=allg)
    assert rep.lambda_b == pytest.approx(rep.lambda_theta) and rep.holds
    none = type(cl)(np.zeros(len(c), bool), cl.R, 0.5, cl.delta, cl.eps, cl.kappa, cl.R0)
    rep = check_enlargement(g, c, 4.0, 1.0, 0.5, 0.25, 50.0, 1.0, 1.0, classification=none)
    assert rep.lambda_b <= rep.lambda_theta + 1e-12 and rep.holds
