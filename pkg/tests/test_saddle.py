import numpy as np
import pytest

from nccscatter.lib import reaction_path as rp
from nccscatter.lib.errors import NoSaddleError
from nccscatter.lib.pes import LepsParameters, bond_lengths
from nccscatter.lib.saddle import _newton_polish, collinear_gradient, find_saddle, path_constant_from_saddle
from nccscatter.lib.units import MassSystem

from conftest import H2, pair_from_ev


class TiltedSurface:
    """BC Morse well plus a constant pull on r_AB: no stationary point."""

    def __init__(self):
        self.mass_system = MassSystem.from_amu(1.0, 1.0, 1.0)
        p = pair_from_ev(**H2)
        self.params = LepsParameters(bc=p, ab=p, ac=p)

    def energy(self, q0, q1, theta):
        r_bc, r_ab, _ = bond_lengths(self.mass_system, q0, q1, theta)
        return self.params.bc.morse(r_bc) - 0.01 * r_ab


def test_symmetric_surface_saddle_on_symmetry_line(h3_surface):
    sd = find_saddle(h3_surface)
    assert sd.r_ab == pytest.approx(sd.r_bc, abs=1e-6)
    assert sd.gradient_norm < 1e-8
    lo, hi = sd.hessian_eigenvalues
    assert lo < 0.0 < hi
    # barrier above the H2 well
    assert sd.energy > -h3_surface.params.bc.De


def test_saddle_gradient_vanishes(h3_surface):
    sd = find_saddle(h3_surface)
    g = collinear_gradient(h3_surface, sd.q0, sd.q1)
    assert np.linalg.norm(g) < 1e-8


def test_path_constant_puts_saddle_on_curve(h3_surface):
    sd = find_saddle(h3_surface)
    a = path_constant_from_saddle(h3_surface, sd)
    re = h3_surface.params.bc.re
    assert a == pytest.approx((sd.r_ab - re) * (sd.r_bc - re))
    assert a > 0.0


def test_no_barrier_raises_with_scan():
    with pytest.raises(NoSaddleError) as info:
        find_saddle(TiltedSurface(), points=30)
    assert info.value.scan.shape == (900, 4)


def test_default_surface_saddle(default_setup):
    s = default_setup
    sd = s.saddle
    p = s.surface.params
    assert sd.gradient_norm < 1e-8
    lo, hi = sd.hessian_eigenvalues
    assert lo < 0.0 < hi
    # stretched in both bonds, between the HF well and three free atoms
    assert sd.r_ab > p.ab.re and sd.r_bc > p.bc.re
    assert -p.bc.De < sd.energy < 0.0
    u, v = rp.scaled_to_ncc(s.spec, sd.q0, sd.q1)
    assert abs(v) < 1e-8


def test_newton_polish_returns_to_the_saddle(h3_surface):
    sd = find_saddle(h3_surface)
    q0, q1 = _newton_polish(h3_surface, sd.q0 + 2e-3, sd.q1 - 1e-3)
    assert q0 == pytest.approx(sd.q0, abs=1e-7)
    assert q1 == pytest.approx(sd.q1, abs=1e-7)
    assert np.linalg.norm(collinear_gradient(h3_surface, q0, q1)) < 1e-8
