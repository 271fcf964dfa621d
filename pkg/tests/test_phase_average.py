import math
from dataclasses import replace

import numpy as np
import pytest

from nccscatter.lib.coupled import CoupledSystem, solve_coupled_static, solve_coupled_tube
from nccscatter.lib.errors import DomainError, NoReactiveMeasureError
from nccscatter.lib.phase_average import (
    MeasureBuilder,
    average_probability,
    measure_from_map,
    rectangle_bounds,
    refine_until_converged,
    sigma_measure,
)
from nccscatter.models.measure import PhaseMeasure, Rectangle
from nccscatter.models.trajectory import GeodesicState, GeodesicTrajectory, Outcome

R, N, U = Outcome.Reactive, Outcome.NonReactive, Outcome.Undecided


def rect(index, sigma):
    return Rectangle(
        index=index, phi_center=0.0, phi_lo=0.0, phi_hi=1.0, E_lo=0.0, E_hi=0.0, l=1, k=1, reactive=0, counted=1, sigma=sigma
    )


def test_sigma_measure_policies():
    assert sigma_measure([R, R, N, U]) == (pytest.approx(2 / 3), 2, 3)
    assert sigma_measure([R, R, N, U], undecided="nonreactive") == (0.5, 2, 4)
    assert sigma_measure([R, N, N, U], target="reactant") == (pytest.approx(2 / 3), 2, 3)
    assert sigma_measure([1, 0]) == (0.5, 1, 2)
    assert sigma_measure([U, U]) == (0.0, 0, 0)


def test_sigma_measure_rejects_bad_input():
    with pytest.raises(DomainError):
        sigma_measure([])
    with pytest.raises(DomainError):
        sigma_measure([R], undecided="ignore")
    with pytest.raises(DomainError):
        sigma_measure([R], target="both")


def test_constant_probability_averages_to_itself():
    measure = PhaseMeasure(E=0.1, delta_e=0.0, rectangles=tuple(rect(i, s) for i, s in enumerate([0.2, 1.0, 0.0, 0.5])))
    W = average_probability(measure, [0.3, 0.3, None, 0.3], n=1, m=2)
    assert W.W == pytest.approx(0.3)
    assert W.sigma_total == pytest.approx(1.7)
    assert W.rectangles_used == 3
    assert (W.n, W.m, W.arrangement) == (1, 2, "product")


def test_average_is_sigma_weighted():
    measure = PhaseMeasure(E=0.1, delta_e=0.0, rectangles=(rect(0, 1.0), rect(1, 0.25)))
    W = average_probability(measure, {0: 0.0, 1: 1.0})
    assert W.W == pytest.approx(0.2)


def test_average_without_measure_raises():
    measure = PhaseMeasure(E=0.1, delta_e=0.0, rectangles=(rect(0, 0.0), rect(1, 0.0)))
    with pytest.raises(NoReactiveMeasureError):
        average_probability(measure, [0.5, 0.5])


def test_average_needs_probability_where_sigma_positive():
    measure = PhaseMeasure(E=0.1, delta_e=0.0, rectangles=(rect(0, 0.5),))
    with pytest.raises(DomainError):
        average_probability(measure, {})
    with pytest.raises(DomainError):
        average_probability(measure, [math.nan])


def test_rectangle_bounds_tile_the_circle():
    bounds = rectangle_bounds(1.0, 0.2, 4)
    assert len(bounds) == 4
    assert bounds[0][1] == 0.0
    assert bounds[-1][2] == pytest.approx(2.0 * math.pi)
    for (_, _, hi, _, _), (_, lo, _, _, _) in zip(bounds, bounds[1:]):
        assert hi == pytest.approx(lo)
    assert bounds[2][0] == pytest.approx(2.5 * math.pi / 2)
    assert bounds[0][3:] == (pytest.approx(0.9), pytest.approx(1.1))
    with pytest.raises(DomainError):
        rectangle_bounds(1.0, 0.2, 0)
    with pytest.raises(DomainError):
        rectangle_bounds(1.0, -0.1, 2)


def test_regular_map_converges_immediately():
    # reactive on the first half of the circle only
    calls = []

    def classify(E, phi):
        calls.append((E, phi))
        return R if phi < math.pi else N

    builder = MeasureBuilder(classify, 1.0, 0.1, 4)
    measure = refine_until_converged(builder, tol=0.05, max_subdivision=3)
    assert measure.sigmas == [1.0, 1.0, 0.0, 0.0]
    assert measure.is_regular
    assert measure.cells_unconverged == 0
    assert all(r.l == 4 for r in measure.rectangles)
    # nested subgrids: the 2x2 nodes are reused by the 4x4 pass
    assert len(calls) == len(set(calls)) == 4 * 16


def test_refinement_flags_unconverged_rectangles():
    def classify(E, phi):
        # only the phi = 0 column reacts, so sigma halves with every doubling
        return R if phi == 0.0 else N

    builder = MeasureBuilder(classify, 1.0, 0.0, 1, threads=2)
    measure = refine_until_converged(builder, tol=1e-9, max_subdivision=2, initial_nodes=2)
    assert measure.rectangles[0].l == 8
    assert measure.cells_unconverged == 1
    assert measure.sigma_total == pytest.approx(1 / 8)


def test_refine_validates_arguments():
    builder = MeasureBuilder(lambda E, phi: R, 1.0, 0.0, 2)
    with pytest.raises(DomainError):
        refine_until_converged(builder, max_subdivision=-1)
    with pytest.raises(DomainError):
        refine_until_converged(builder, undecided="drop")


def test_measure_from_map():
    energies = [0.9, 1.0, 1.1, 1.2]
    phases = np.arange(8) * 2.0 * math.pi / 8
    outcomes = np.array(
        [
            [R, R, R, R, N, N, N, N],
            [R, R, R, U, N, N, N, R],
            [R, N, R, N, N, N, N, N],
            [N, N, N, N, N, N, N, N],
        ],
        dtype=int,
    )
    measure = measure_from_map(energies, phases, outcomes, E=1.0, delta_e=0.2, rectangles=2)
    first, second = measure.rectangles
    # rows 0.9, 1.0 and 1.1 fall inside the window; U is excluded
    assert (first.l, first.k) == (3, 4)
    assert (first.reactive, first.counted, first.undecided) == (9, 11, 1)
    assert first.sigma == pytest.approx(9 / 11)
    assert second.sigma == pytest.approx(1 / 12)
    assert all(r.converged for r in measure.rectangles)

    reflected = measure_from_map(energies, phases, outcomes, E=1.0, delta_e=0.2, rectangles=2, target="reactant")
    assert reflected.rectangles[1].sigma == pytest.approx(11 / 12)


def test_measure_from_map_window_and_phase_checks():
    phases = [0.0, math.pi]
    outcomes = np.array([[R, N]])
    with pytest.raises(DomainError):
        measure_from_map([5.0], phases, outcomes, E=1.0, delta_e=0.1, rectangles=2)
    with pytest.raises(DomainError):
        measure_from_map([1.0], phases, outcomes, E=1.0, delta_e=0.1, rectangles=4)


def test_regular_measure_reproduces_static_probability():
    u = np.linspace(-10.0, 10.0, 401)
    system = CoupledSystem.uncoupled(u, [0.0, 0.2], kappa=2.0)
    Y = system.Y + 0.3 * np.exp(-u * u)[:, None, None] * np.array([[0.0, 1.0], [1.0, 0.0]])
    system = replace(system, Y=Y)
    static = solve_coupled_static(system, 0.6, max_phase_step=0.01)

    measure = measure_from_map([0.6], [0.5, 2.0, 3.5, 5.0], [[R, R, R, R]], 0.6, 0.0, 4)
    assert measure.is_regular and measure.sigma_total == 4.0
    deltas = {}
    for r in measure.rectangles:
        # every tube crosses the whole grid
        samples = tuple(GeodesicState(x=(float(x), 0.0, 0.0), xdot=(1.0, 0.0, 0.0), s=float(i)) for i, x in enumerate(np.linspace(-11.0, 11.0, 23)))
        traj = GeodesicTrajectory(samples=samples, conserved_norm=np.ones(23), outcome=R, initial_phase=r.phi_center, energy=0.6)
        S = solve_coupled_tube(system, 0.6, traj, max_phase_step=0.01)
        deltas[r.index] = S.reaction_probabilities()[0, 1]
    W = average_probability(measure, deltas, n=0, m=1)
    assert W.W == pytest.approx(static.reaction_probabilities()[0, 1], abs=1e-10)
    assert W.W > 1e-4
