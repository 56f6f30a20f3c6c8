import numpy as np
import pytest

from tailwave.analysis import self_convergence
from tailwave.coefficients import CoefficientProfile
from tailwave.errors import BlowupError, DomainError, GridError, ResolutionError, StencilError
from tailwave.evolution import (GridSpec, InitialData, NullGrid, characteristic_march, diamond_step,
                               evolve, quasilinear_source, rw_potential)
from tailwave.geometry import CoordinateMap, MetricParams, tortoise_array

SMALL = GridSpec(0.25, 200.0, 240.0)


def test_rw_potential_examples(schw):
    assert rw_potential(schw, 3.0, 0) == pytest.approx(2.0 / 81.0, rel=1e-14)
    tiny = MetricParams(1e-12)
    for r in (1.0, 7.0, 300.0):
        assert rw_potential(tiny, r, 1) == pytest.approx(2.0 / r**2, rel=1e-10)
    far = rw_potential(schw, 1e4, 0)
    assert far == pytest.approx(2e-12, rel=1e-3)
    assert far * 1e12 == pytest.approx((1 - 2e-4) * 2.0, rel=1e-12)
    with pytest.raises(DomainError):
        rw_potential(schw, 2.0)
    with pytest.raises(DomainError):
        rw_potential(schw, 3.0, l=-1)


def test_diamond_step_examples():
    assert diamond_step(0.0, 1.0, 1.0, 0.0, 0.0, 0.3, 0.3) == 2.0
    # 2 - (0.01/8)(0.05)(2) = 2 - 1.25e-4
    assert diamond_step(0.0, 1.0, 1.0, 0.05, 0.0, 0.1, 0.1) == pytest.approx(1.999875, abs=1e-15)
    assert diamond_step(1.0, 1.0, 1.0, 0.0, 4.0, 0.1, 0.1) == pytest.approx(1.01, abs=1e-15)


def _patch(f, i0=5, j0=5, h=0.1):
    u = (np.arange(12) - i0) * h + 1.0
    v = (np.arange(12) - j0) * h + 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    return f(U, V), u, v, h


def test_source_vanishes_for_linear_and_constant():
    phi, *_ = _patch(lambda U, V: 0 * U + 3.0)
    p = CoefficientProfile(0.5, h0=1.0, cubic_c=2.0)
    assert quasilinear_source(phi, 4, 4, 0.1, p, 10.0, 5.0, 7.0) == 0.0
    phi, *_ = _patch(lambda U, V: np.sin(U) * V)
    assert quasilinear_source(phi, 4, 4, 0.1, CoefficientProfile(0.5, h0=0.0), 10.0, 5.0, 7.0) == 0.0


def test_source_manufactured_solutions():
    H1 = CoefficientProfile(1.0, h0=1.0, kind="constant")
    phi, u, v, h = _patch(lambda U, V: U * V)
    assert quasilinear_source(phi, 4, 4, h, H1, 0.0, 0.0, 1.0) == pytest.approx(0.0, abs=1e-10)
    phi, u, v, h = _patch(lambda U, V: U * U)
    i = j = 4
    G = quasilinear_source(phi, i, j, h, H1, 0.0, 0.0, 1.0)
    u_c = 0.5 * (u[i] + u[i + 1])
    phi_c = 0.25 * (2 * u[i] ** 2 + 2 * u[i + 1] ** 2)  # corner average of u^2
    assert G == pytest.approx(8.0 * phi_c, rel=1e-10)
    assert G == pytest.approx(8.0 * u_c**2, abs=8.0 * h * h)


def test_source_stencil_error():
    phi, *_ = _patch(lambda U, V: U * U)
    with pytest.raises(StencilError):
        quasilinear_source(phi, 0, 3, 0.1, CoefficientProfile(1.0), 1.0, 1.0, 3.0)


@pytest.mark.parametrize("F, G", [
    (lambda u: 0 * u + 1.0, lambda v: 0 * v),
    (lambda u: 2.0 - 0.5 * u, lambda v: 0.3 * v),
    (lambda u: u * u - u, lambda v: 0.25 * v * v + 2.0),
])
def test_flat_space_exactness(F, G):
    h = 0.1
    u = h * np.arange(41)
    v = h * np.arange(57)
    psi = characteristic_march(F(0.0) + G(v), F(u) + G(0.0), h)
    exact = F(u)[:, None] + G(v)[None, :]
    assert np.max(np.abs(psi - exact)) < 1e-11


def test_zero_data_gives_zero(schw, linear):
    res = evolve(schw, linear, InitialData(epsilon=0.0), SMALL, observers=(10.0, 30.0))
    for s in res.series:
        assert np.all(s.phi == 0) and np.all(s.dt_phi == 0) and np.all(s.S_phi == 0)
    res = evolve(schw, CoefficientProfile(0.5), InitialData(epsilon=0.0), SMALL, store_stride=0)
    assert res.meta["sup_phi"] == 0.0


def test_initial_data_profiles():
    d = InitialData(epsilon=2.0, v_c=1.0, sigma=2.0, profile="compact-bump")
    v = np.linspace(-10, 12, 2001)
    f = d(v)
    assert np.all(f[(v < 1 - 6) | (v > 1 + 6)] == 0)
    assert np.all(f[(v > 1 - 5.99) & (v < 1 + 5.99)] > 0)
    assert d(np.array([1.0]))[0] == pytest.approx(2.0)
    with pytest.raises(DomainError):
        InitialData(epsilon=-1.0)
    with pytest.raises(DomainError):
        InitialData(profile="square")


def test_preconditions(schw, linear):
    with pytest.raises(ResolutionError):
        evolve(schw, linear, InitialData(sigma=2.0), GridSpec(0.25, 50.0, 60.0))
    with pytest.raises(DomainError):
        evolve(MetricParams(1.0, 0.3), linear, InitialData(), SMALL)
    with pytest.raises(DomainError):
        evolve(schw, CoefficientProfile(0.5, kind="full-tensor"), InitialData(), SMALL)
    with pytest.raises(DomainError):
        evolve(schw, CoefficientProfile(0.5), InitialData(), SMALL, l=1)
    with pytest.raises(GridError):
        evolve(schw, linear, InitialData(), SMALL, observers=(500.0,))
    with pytest.raises(GridError):
        GridSpec(0.0, 10.0, 20.0)


def test_blowup_reports_last_good_slice(schw):
    prof = CoefficientProfile(0.3, h0=1.0, kind="constant")
    with pytest.raises(BlowupError) as ei:
        evolve(schw, prof, InitialData(epsilon=1.0), SMALL)
    err = ei.value
    assert err.row is not None and err.row >= 1
    assert err.last_good is not None and np.all(np.isfinite(err.last_good))


def test_metadata_and_csv(tmp_path, schw, linear):
    res = evolve(schw, linear, InitialData(), SMALL)
    for k in ("grid", "sup_phi", "wall_seconds", "psi_min", "psi_max"):
        assert k in res.meta
    s = res.series[0]
    assert np.all(np.diff(s.t) > 0)
    assert s.samples[0] == (s.t[0], s.phi[0], s.dt_phi[0], s.S_phi[0])
    np.testing.assert_allclose(s.S_phi, s.t * s.dt_phi + s.r_obs * s.dr_phi, rtol=1e-12)
    path = tmp_path / "obs.csv"
    s.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,phi,dt_phi,S_phi"
    assert len(lines) == s.t.size + 1


def test_r_cache_consistent(schw, linear):
    res = evolve(schw, linear, InitialData(), SMALL)
    c = res.grid.r_cache
    cm = CoordinateMap(schw)
    # near r* = -60 the gap r - 2M is ~1e-13, so it carries the precision, not r
    back = tortoise_array(cm, c["r"], gap=c["gap"])
    assert np.all(np.abs(back - c["rstar"]) <= 1e-10 * np.maximum(1.0, np.abs(c["rstar"])))


def test_stored_grid_matches_observer(schw, linear):
    res = evolve(schw, linear, InitialData(), SMALL, observers=(10.0,))
    g = res.grid
    t, rs, r, _ = g.coords()
    # v - u = 20 lies on a lattice diagonal: v0 = -40, h = 0.25
    a = np.arange(0, 100)
    b = a + int(round((20.0 - g.v0) / g.h))
    np.testing.assert_allclose(g.psi[a, b] / r[a, b], res.series[0].phi[a], rtol=1e-12, atol=0)
    w = g.window(10.0, 20.0, 30.0, 40.0)
    assert isinstance(w, NullGrid) and w.psi.shape[0] < g.psi.shape[0]


def test_domain_of_dependence(schw):
    v1 = 30.0
    base = InitialData(v_c=0.0)
    for prof in (CoefficientProfile(1.0, h0=0.0), CoefficientProfile(0.5, h0=1.0)):
        a = evolve(schw, prof, base, SMALL)
        assert np.array_equal(a.grid.psi, evolve(schw, prof, base, SMALL).grid.psi)
        pert = _perturbed_run(schw, prof, v1)
        # truncated nodes below r* = -60 only mirror the boundary value; compare live nodes
        ok = a.grid.valid
        early = ok & (a.grid.v[None, :] < v1)
        late = ok & (a.grid.v[None, :] >= v1 + 1.0)
        assert np.max(np.abs(pert[early] - a.grid.psi[early])) == 0.0
        assert np.max(np.abs(pert[late] - a.grid.psi[late])) > 0.0


def _perturbed_run(schw, prof, v1):
    class Bumped(InitialData):
        def __call__(self, v):
            out = super().__call__(v)
            v = np.asarray(v, dtype=float)
            return out + np.where(v >= v1, 1e-4 * np.sin(v - v1) ** 2, 0.0)
    return evolve(schw, prof, Bumped(), SMALL).grid.psi


@pytest.mark.parametrize("delta", [0.3, 0.5, 1.5])
def test_quasilinear_smallness(schw, delta):
    eps = 1e-3
    res = evolve(schw, CoefficientProfile(delta, h0=1.0, cubic_c=1.0), InitialData(epsilon=eps),
                 GridSpec(0.25, 400.0, 440.0), store_stride=0)
    assert np.isfinite(res.meta["sup_phi"])
    assert res.meta["sup_phi"] <= 2 * eps
    assert res.meta["source_rows_skipped"] == [0] and res.meta["one_sided_rows"] == [1]


def test_quasilinear_differs_from_linear(schw, linear):
    a = evolve(schw, linear, InitialData(), SMALL).series[0].phi
    b = evolve(schw, CoefficientProfile(0.5, h0=1.0), InitialData(), SMALL).series[0].phi
    assert 0 < np.max(np.abs(a - b)) < 1e-2 * np.max(np.abs(a))


def test_self_convergence_ratio(schw, linear):
    series = [evolve(schw, linear, InitialData(), GridSpec(h, 200.0, 220.0), store_stride=0).series[0]
              for h in (0.25, 0.125, 0.0625)]
    ratio, order = self_convergence(*series)
    assert ratio == pytest.approx(4.0, abs=0.5)
    assert order == pytest.approx(2.0, abs=0.2)


def test_potential_scale_hook(schw, linear):
    a = evolve(schw, linear, InitialData(), SMALL, store_stride=0)
    b = evolve(schw, linear, InitialData(), SMALL, store_stride=0, potential_scale=1.1)
    assert b.meta["potential_scale"] == 1.1
    assert np.max(np.abs(a.series[0].phi - b.series[0].phi)) > 0
