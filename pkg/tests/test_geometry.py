import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from tailwave.errors import DegenerateError, DomainError, NoHorizonError
from tailwave.geometry import (CoordinateMap, MetricParams, areal_from_tortoise,
                               areal_from_tortoise_array, frame_decompose, kerr_delta,
                               kerr_horizons, kerr_metric_components, normalized_radius,
                               null_frame_at, schwarzschild_cartesian_metric, tortoise)


def test_metric_params_invariants():
    with pytest.raises(DomainError):
        MetricParams(0.0)
    with pytest.raises(DomainError):
        MetricParams(1.0, -0.1)


@pytest.mark.parametrize("r, expected", [(3.0, 0.0), (4.0, 1.0 + 2.0 * math.log(2.0))])
def test_tortoise_closed_form(cmap, r, expected):
    assert tortoise(cmap, r) == pytest.approx(expected, abs=1e-14)


def test_tortoise_near_horizon_matches_integrated_derivative(cmap):
    # r*(r) - r*(3) = int_3^r dr / (1 - 2/r)
    integral, _ = quad(lambda x: 1.0 / (1.0 - 2.0 / x), 3.0, 2.001, limit=200)
    assert tortoise(cmap, 2.001) == pytest.approx(integral, rel=1e-9)
    assert tortoise(cmap, 2.001) == pytest.approx(-14.8146, abs=1e-4)


def test_tortoise_domain(cmap):
    with pytest.raises(DomainError):
        tortoise(cmap, 2.0)
    with pytest.raises(DomainError):
        tortoise(CoordinateMap(MetricParams(1.0, 0.5)), 4.0)


def test_areal_from_tortoise_examples(cmap):
    assert areal_from_tortoise(cmap, 0.0) == pytest.approx(3.0, abs=1e-12)
    assert areal_from_tortoise(cmap, 2.386294) == pytest.approx(4.0, abs=1e-6)
    oracle = brentq(lambda r: tortoise(cmap, r) - 2.386294, 3.0, 5.0, xtol=1e-15)
    assert float(areal_from_tortoise(cmap, 2.386294)) == pytest.approx(oracle, abs=1e-9)
    r = areal_from_tortoise(cmap, -50.0)
    assert 0.0 < r - 2.0 < 1e-9
    assert 0.0 < r.gap < 1e-9


@pytest.mark.parametrize("M", [0.5, 1.0, 2.0])
def test_tortoise_roundtrip_dense(M):
    cm = CoordinateMap(MetricParams(M))
    xs = np.concatenate([np.linspace(-60.0, 10.0, 701), np.geomspace(10.0, 1e4, 300)])
    for x in xs:
        r = areal_from_tortoise(cm, x)
        assert abs(tortoise(cm, r) - x) <= 1e-10 * max(1.0, abs(x))


def test_areal_array_matches_scalar(cmap):
    xs = np.linspace(-55.0, 500.0, 97)
    r, gap = areal_from_tortoise_array(cmap, xs)
    for x, ri, gi in zip(xs, r, gap):
        rs = areal_from_tortoise(cmap, x)
        assert ri == pytest.approx(float(rs), rel=1e-13)
        assert gi == pytest.approx(rs.gap, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-60.0, 1e4))
def test_roundtrip_property(x):
    cm = CoordinateMap(MetricParams(1.0))
    assert abs(tortoise(cm, areal_from_tortoise(cm, x)) - x) <= 1e-10 * max(1.0, abs(x))


def test_normalized_radius_examples():
    cm = CoordinateMap(MetricParams(1.0), R1=100.0)
    assert normalized_radius(cm, 50.0) == 50.0
    assert normalized_radius(cm, 300.0) == pytest.approx(tortoise(cm, 300.0), abs=1e-12)
    assert normalized_radius(cm, 300.0) == pytest.approx(308.394, abs=1e-3)
    mid = normalized_radius(cm, 150.0)
    assert 150.0 < mid < tortoise(cm, 150.0)


def test_normalized_radius_monotone():
    cm = CoordinateMap(MetricParams(1.0), R1=100.0)
    r = np.linspace(2.0 + 1e-6, 1000.0, 10_000)
    assert np.all(np.diff(normalized_radius(cm, r)) > 0)


def test_kerr_horizons_examples():
    assert kerr_horizons(MetricParams(1.0, 0.0)) == (0.0, 2.0)
    rm, rp = kerr_horizons(MetricParams(1.0, 0.6))
    assert (rm, rp) == (pytest.approx(0.2, abs=1e-15), pytest.approx(1.8, abs=1e-15))
    with pytest.raises(NoHorizonError):
        kerr_horizons(MetricParams(1.0, 1.2))


def test_kerr_horizons_are_roots():
    rng = np.random.default_rng(1)
    for _ in range(100):
        M = rng.uniform(0.1, 10.0)
        p = MetricParams(M, rng.uniform(0.0, 0.99) * M)
        rm, rp = kerr_horizons(p)
        assert rm < rp
        assert abs(kerr_delta(p, rm)) <= 1e-13 and abs(kerr_delta(p, rp)) <= 1e-13


def test_kerr_tables():
    tab = kerr_metric_components(MetricParams(1.0, 0.0), 4.0, math.pi / 2)
    assert tab.g_cov[0, 0] == pytest.approx(-0.5, abs=1e-15)
    tab = kerr_metric_components(MetricParams(1.0, 0.5), 3.0, math.pi / 2)
    # the ds^2 cross-term coefficient is twice the symmetric matrix entry
    assert tab.line_element["tphi"] == pytest.approx(-2.0 / 3.0, abs=1e-14)
    assert np.max(np.abs(tab.g_cov @ tab.g_inv - np.eye(4))) < 1e-12
    assert set(tab.to_dict()) >= {"g_cov", "g_inv"}


def test_kerr_schwarzschild_limit_componentwise():
    M, r, th = 1.3, 7.0, 0.7
    g = kerr_metric_components(MetricParams(M, 0.0), r, th).g_cov
    f = 1.0 - 2.0 * M / r
    expected = np.diag([-f, 1.0 / f, r * r, (r * math.sin(th)) ** 2])
    assert np.max(np.abs(g - expected)) <= 1e-14


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.0, 0.99), st.floats(1.05, 50.0), st.floats(0.05, 3.09))
def test_kerr_inverse_property(M, a_frac, r_frac, theta):
    p = MetricParams(M, a_frac * M)
    r = r_frac * kerr_horizons(p)[1]
    tab = kerr_metric_components(p, r, theta)
    assert np.max(np.abs(tab.g_cov @ tab.g_inv - np.eye(4))) < 1e-12


def test_kerr_degenerate():
    p = MetricParams(1.0, 0.6)
    with pytest.raises(DegenerateError):
        kerr_metric_components(p, kerr_horizons(p)[1], 1.0)
    with pytest.raises(DegenerateError):
        kerr_metric_components(p, 4.0, 0.0)


def _frame_checks(p, r, w):
    fr = null_frame_at(p, r, w)
    g = schwarzschild_cartesian_metric(p, r, w)
    d = lambda x, y: float(x @ g @ y)  # noqa: E731
    f = 1.0 - 2.0 * p.M / r
    return [d(fr.L, fr.L), d(fr.Lbar, fr.Lbar), d(fr.L, fr.Lbar) + 2.0 * f,
            d(fr.A, fr.A) - 1.0, d(fr.Astar, fr.Astar) - 1.0, d(fr.A, fr.Astar)]


def test_null_frame_examples(schw):
    fr = null_frame_at(schw, 3.0, (1.0, 0.0, 0.0))
    g = schwarzschild_cartesian_metric(schw, 3.0, (1.0, 0.0, 0.0))
    assert fr.L @ g @ fr.Lbar == pytest.approx(-2.0 / 3.0, abs=1e-14)
    assert max(abs(c) for c in _frame_checks(schw, 5.0, (0.0, 0.0, 1.0))) < 1e-12
    far = null_frame_at(schw, 1e12, (0.0, 1.0, 0.0))
    assert np.allclose(far.L, [1, 0, 1, 0], atol=1e-11)
    assert np.allclose(far.Lbar, [1, 0, -1, 0], atol=1e-11)
    with pytest.raises(DomainError):
        null_frame_at(schw, 2.0, (1.0, 0.0, 0.0))


def test_null_frame_random(schw):
    rng = np.random.default_rng(7)
    for _ in range(1000):
        r = 2.0 + 10.0 ** rng.uniform(-2, 3)
        w = rng.normal(size=3)
        assert max(abs(c) for c in _frame_checks(schw, r, w)) < 1e-12
        fr = null_frame_at(schw, r, w)
        # A, A* tangential to the sphere
        assert abs(fr.A[1:] @ fr.omega) < 1e-12 and abs(fr.Astar[1:] @ fr.omega) < 1e-12


def test_frame_decompose_examples(schw):
    w = (0.3, -0.4, 0.866)
    zero = frame_decompose(schw, np.zeros((4, 4)), 4.0, w)
    assert zero.LbarLbar == 0 and all(v == 0 for v in zero.LbarT.values())
    assert all(v == 0 for v in zero.UT.values())
    lb = null_frame_at(schw, 4.0, w).Lbar
    comp = frame_decompose(schw, np.outer(lb, lb), 4.0, w)
    assert comp.LbarLbar == pytest.approx(1.0, abs=1e-12)
    assert max(abs(v) for v in list(comp.LbarT.values()) + list(comp.UT.values())) < 1e-12
    with pytest.raises(DomainError):
        frame_decompose(schw, np.zeros((4, 4)), 1.5, w)


def test_frame_decompose_roundtrip(schw):
    rng = np.random.default_rng(11)
    for _ in range(1000):
        h = rng.uniform(-1, 1, size=(4, 4))
        h = 0.5 * (h + h.T)
        r = 2.0 + 10.0 ** rng.uniform(-1, 3)
        back = frame_decompose(schw, h, r, rng.normal(size=3)).reassemble()
        assert np.max(np.abs(back - h)) <= 1e-10 * max(1.0, np.max(np.abs(h)))
