from dataclasses import dataclass

import numpy as np
import pytest

from nccscatter.lib import reaction_path as rp
from nccscatter.lib.channels import vibrational_eigenstates
from nccscatter.lib.config import load_leps_parameters
from nccscatter.lib.coupled import CoupledSystem
from nccscatter.lib.pes import LepsParameters, LepsSurface, PairParameters, asymptotic_limits
from nccscatter.lib.saddle import Saddle, find_saddle, path_constant_from_saddle
from nccscatter.lib.units import UNITS, MassSystem

H2 = dict(De_eV=4.746, beta_invA=1.942, re_A=0.7414, sato=0.18)

# acceptance energy on the shipped surface, above the collinear barrier
DEFAULT_E_EV = -5.5


def pair_from_ev(De_eV, beta_invA, re_A, sato):
    return PairParameters(De=UNITS.ev(De_eV), beta=beta_invA / UNITS.length, re=UNITS.angstrom(re_A), sato=sato)


def write_pes(path, bc=H2, ab=H2, ac=H2):
    lines = ["[meta]", "note = test surface", ""]
    for name, p in (("BC", bc), ("AB", ab), ("AC", ac)):
        lines.append(f"[pair.{name}]")
        lines.extend(f"{k} = {v}" for k, v in p.items())
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


@dataclass(frozen=True)
class DefaultSetup:
    """Shipped LiFH surface with its saddle-derived curve and asymptotic limits."""

    surface: LepsSurface
    saddle: Saddle
    spec: rp.ReactionPathSpec
    u_nonreact: float
    u_react: float


@pytest.fixture
def lifh_surface():
    ms = MassSystem.from_amu(7.0, 19.0, 1.0)
    return LepsSurface(ms, load_leps_parameters().params)


@pytest.fixture
def h3_surface():
    ms = MassSystem.from_amu(1.0, 1.0, 1.0)
    p = pair_from_ev(**H2)
    return LepsSurface(ms, LepsParameters(bc=p, ab=p, ac=p))


@pytest.fixture(scope="session")
def default_setup():
    ms = MassSystem.from_amu(7.0, 19.0, 1.0)
    params = load_leps_parameters().params
    surface = LepsSurface(ms, params)
    saddle = find_saddle(surface)
    spec = rp.ReactionPathSpec.from_bond_lengths(ms, path_constant_from_saddle(surface, saddle), params.bc.re, params.ab.re)
    u_nonreact, u_react = asymptotic_limits(surface, spec)
    return DefaultSetup(surface=surface, saddle=saddle, spec=spec, u_nonreact=u_nonreact, u_react=u_react)


@pytest.fixture(scope="session")
def default_system(default_setup):
    """Cached builder of coupled systems on the shipped surface over the default v range."""
    cache = {}

    def build(channels: int = 8, u_steps: int = 1200, v_steps: int = 400) -> CoupledSystem:
        key = (channels, u_steps, v_steps)
        if key not in cache:
            s = default_setup
            u = np.linspace(s.u_nonreact, s.u_react, u_steps)
            v = np.linspace(-3.0, 1.2, v_steps)
            basis = vibrational_eigenstates(s.surface, s.spec, u, v, channels)
            cache[key] = CoupledSystem.from_basis(basis, s.spec, s.surface.mass_system.mu)
        return cache[key]

    return build
