import numpy as np
import pytest

from nccscatter.lib import reaction_path as rp
from nccscatter.lib.errors import DomainError, RegionError
from nccscatter.lib.pes import (
    InternalGeometry,
    LepsParameters,
    PairParameters,
    asymptotic_limits,
    barrier_top,
    collinear_potential,
    effective_potential,
    leps_energy,
    potential_internal,
    u_bar,
    u_eff,
)

P1 = PairParameters(De=0.17, beta=1.0, re=1.4, sato=0.0)
P2 = PairParameters(De=0.22, beta=0.9, re=1.7, sato=0.2)
P3 = PairParameters(De=0.09, beta=1.1, re=3.0, sato=0.3)
FAR = 1e3


@pytest.mark.parametrize("kwargs", [dict(De=0.0, beta=1.0, re=1.0), dict(De=1.0, beta=-1.0, re=1.0), dict(De=1.0, beta=1.0, re=0.0), dict(De=1.0, beta=1.0, re=1.0, sato=-1.0)])
def test_pair_parameters_validated(kwargs):
    with pytest.raises(DomainError):
        PairParameters(**kwargs)


def test_diatomic_limit_is_minus_de():
    p = LepsParameters(bc=P1, ab=P2, ac=P3)
    assert float(leps_energy(p, (P1.re, FAR, FAR))) == pytest.approx(-P1.De, abs=1e-12)
    assert float(leps_energy(p, (FAR, P2.re, FAR))) == pytest.approx(-P2.De, abs=1e-12)


def test_all_separated_is_zero():
    p = LepsParameters(bc=P1, ab=P2, ac=P3)
    assert float(leps_energy(p, (FAR, FAR, 2 * FAR))) == pytest.approx(0.0, abs=1e-15)


def test_separated_limit_reduces_to_morse():
    p = LepsParameters(bc=P2, ab=P1, ac=P3)
    x = np.linspace(-0.5, 5.0, 400)
    r = P2.re + x
    V = leps_energy(p, (r, np.full_like(r, FAR), np.full_like(r, FAR)))
    np.testing.assert_allclose(V, P2.morse(r), rtol=0, atol=1e-10)


def test_exchange_term_symmetric_under_relabeling():
    g = (1.5, 1.9, 3.4)
    base = float(leps_energy(LepsParameters(bc=P1, ab=P2, ac=P3), g))
    swapped = float(leps_energy(LepsParameters(bc=P2, ab=P1, ac=P3), (g[1], g[0], g[2])))
    assert swapped == pytest.approx(base, rel=1e-14)


def test_internal_geometry_checks():
    InternalGeometry(1.0, 2.0, 3.0)
    with pytest.raises(DomainError):
        InternalGeometry(1.0, 1.0, 3.0)
    with pytest.raises(DomainError):
        InternalGeometry(-1.0, 1.0, 1.0)


def test_asymptotic_channels(lifh_surface):
    ms = lifh_surface.mass_system
    p = lifh_surface.params
    # A far away, BC at equilibrium
    q1 = p.bc.re / ms.lam
    assert float(potential_internal(ms, p, 1e3, q1, 0.0)) == pytest.approx(-p.bc.De, abs=1e-8)
    # C far away, AB at equilibrium
    q1 = 1e3
    q0 = ms.lam * p.ab.re + ms.b * q1
    assert float(potential_internal(ms, p, q0, q1, 0.0)) == pytest.approx(-p.ab.De, abs=1e-8)


def test_potential_continuity(lifh_surface):
    ms = lifh_surface.mass_system
    p = lifh_surface.params
    rng = np.random.default_rng(3)
    q0 = rng.uniform(3.0, 8.0, 50)
    q1 = rng.uniform(1.0, 3.0, 50)
    th = rng.uniform(0.0, np.pi, 50)
    h = 1e-6
    dV = np.abs(potential_internal(ms, p, q0 + h, q1, th) - potential_internal(ms, p, q0, q1, th))
    assert np.max(dV) < 10.0 * h


def test_collinear_potential_shares_code_path(lifh_surface):
    spec = rp.ReactionPathSpec(a=1.0, b=lifh_surface.mass_system.b, q_eq_minus=1.0, q_eq_plus=2.0)
    u, v = 0.7, 0.1
    q0, q1 = rp.ncc_to_scaled(spec, u, v)
    assert collinear_potential(lifh_surface, spec, u, v) == lifh_surface.energy(q0, q1, 0.0)


def test_effective_potential_constant_eta_vanishes():
    val = effective_potential(lambda u, v: np.ones_like(np.asarray(v, dtype=float)), lambda u, v: np.zeros_like(np.asarray(v, dtype=float)), 0.3, np.array([0.0, 0.2]))
    np.testing.assert_allclose(val, 0.0, atol=1e-15)


def test_effective_potential_pure_v_dependence():
    K = 0.4
    v = np.array([-0.5, 0.0, 0.7])
    val = effective_potential(lambda u, vv: 1.0 + K * np.asarray(vv), lambda u, vv: np.full_like(np.asarray(vv, dtype=float), K), 0.0, v)
    np.testing.assert_allclose(val, K * K / (4.0 * (1.0 + K * v) ** 2), rtol=1e-12)


def test_effective_potential_second_order_in_h():
    def eta(u, v):
        return 1.0 + 0.3 * np.sin(u) + 0.1 * np.asarray(v)

    def eta_v(u, v):
        return np.full_like(np.asarray(v, dtype=float), 0.1)

    u, v = 0.8, 0.2
    e = eta(u, v)
    exact = 0.01 / (4 * e**2) + 0.3 * np.sin(u) / (2 * e**3) + 5 * (0.3 * np.cos(u)) ** 2 / (4 * e**4)
    err1 = abs(effective_potential(eta, eta_v, u, v, h_u=1e-2) - exact)
    err2 = abs(effective_potential(eta, eta_v, u, v, h_u=5e-3) - exact)
    assert 3.5 < err1 / err2 < 4.5


def test_u_eff_region_error():
    spec = rp.ReactionPathSpec(a=1.0, b=1.0, q_eq_minus=0.0, q_eq_plus=2.0)
    # K(0) = 2, so v = -0.6 is past the self-crossing boundary
    with pytest.raises(RegionError):
        u_eff(spec, 0.0, -0.6)


def test_u_eff_energy_scaling():
    spec = rp.ReactionPathSpec(a=1.0, b=1.0, q_eq_minus=0.0, q_eq_plus=2.0)
    bracket = u_eff(spec, 0.4, 0.1)
    assert u_eff(spec, 0.4, 0.1, mu=2.0) == pytest.approx(bracket / 4.0, rel=1e-14)


def test_u_bar_grid_matches_pointwise(lifh_surface):
    spec = rp.ReactionPathSpec(a=1.0, b=lifh_surface.mass_system.b, q_eq_minus=1.0, q_eq_plus=2.0)
    u = np.linspace(-2.0, 2.0, 5)
    v = np.full_like(u, 0.05)
    grid = u_bar(lifh_surface, spec, u, v)
    for k in range(u.size):
        assert float(u_bar(lifh_surface, spec, u[k], v[k])) == pytest.approx(float(grid[k]), abs=1e-12)


def _channel_deviation(surface, spec, u, side):
    v = np.array([-0.3, 0.0, 0.3])
    v = v[rp.admissible_v(spec, u, v)]
    q0, q1 = rp.ncc_to_scaled(spec, np.full_like(v, u), v)
    return float(np.max(np.abs(surface.energy(q0, q1, 0.0) - surface.channel_potential(side, q0, q1))))


def test_asymptotic_limits_bound_the_channel_deviation(default_setup):
    s = default_setup
    threshold = 1e-6 * s.surface.well_depth
    u_top = barrier_top(s.surface, s.spec)
    assert s.u_nonreact < u_top < s.u_react
    assert _channel_deviation(s.surface, s.spec, s.u_nonreact, "reactant") < threshold
    assert _channel_deviation(s.surface, s.spec, s.u_react, "product") < threshold
    assert _channel_deviation(s.surface, s.spec, u_top, "reactant") > 1e3 * threshold
    assert _channel_deviation(s.surface, s.spec, u_top, "product") > 1e3 * threshold


def test_tighter_tolerance_moves_limits_outward(default_setup):
    s = default_setup
    lo, hi = asymptotic_limits(s.surface, s.spec, tol=1e-8)
    assert lo < s.u_nonreact and hi > s.u_react
