"""Phase measure over initial-phase rectangles and averaged probabilities.

A rectangle's weight sigma is the fraction of its (E, phi) subgrid whose
generating trajectory ends in the target arrangement. Subgrids are nested
(node fractions j/m), so refinement reuses every classified node.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from nccscatter.lib.errors import DomainError, NoReactiveMeasureError
from nccscatter.models.measure import AveragedProbability, PhaseMeasure, Rectangle
from nccscatter.models.trajectory import Outcome

logger = logging.getLogger(__name__)

UNDECIDED_POLICIES = ("exclude", "nonreactive")
SIGMA_TARGETS = ("product", "reactant")


def _check_policy(undecided: str, target: str) -> None:
    if undecided not in UNDECIDED_POLICIES:
        raise DomainError(f"undecided policy must be one of {UNDECIDED_POLICIES}, got {undecided!r}")
    if target not in SIGMA_TARGETS:
        raise DomainError(f"sigma target must be one of {SIGMA_TARGETS}, got {target!r}")


def sigma_measure(outcomes: Iterable[Outcome | int], undecided: str = "exclude", target: str = "product") -> tuple[float, int, int]:
    """(sigma, N_i, M_i) for one classified subgrid.

    Under ``exclude`` Undecided nodes leave both counts; under
    ``nonreactive`` they count as reaching neither arrangement.

    Raises:
        DomainError: If the subgrid is empty.
    """
    _check_policy(undecided, target)
    outs = [Outcome(int(o)) for o in outcomes]
    if not outs:
        raise DomainError("empty subgrid")
    hit = Outcome.Reactive if target == "product" else Outcome.NonReactive
    n_hit = sum(1 for o in outs if o == hit)
    n_und = sum(1 for o in outs if o == Outcome.Undecided)
    counted = len(outs) - n_und if undecided == "exclude" else len(outs)
    if counted == 0:
        logger.warning(f"subgrid of {len(outs)} nodes is entirely Undecided; sigma set to 0")
        return 0.0, 0, 0
    return n_hit / counted, n_hit, counted


def average_probability(measure: PhaseMeasure, deltas: Mapping[int, float] | Sequence[Optional[float]], n: int = 0, m: int = 0, arrangement: str = "product") -> AveragedProbability:
    """Sigma-weighted mean of per-rectangle probabilities.

    ``deltas`` maps rectangle index to the transition probability at the
    rectangle's centre phase; entries may be missing where sigma is 0.

    Raises:
        NoReactiveMeasureError: If every sigma is 0.
        DomainError: If a rectangle with positive sigma has no probability.
    """
    total = 0.0
    weighted = 0.0
    used = 0
    for rect in measure.rectangles:
        if rect.sigma <= 0.0:
            continue
        value = deltas.get(rect.index) if isinstance(deltas, Mapping) else deltas[rect.index]
        if value is None or not math.isfinite(value):
            raise DomainError(f"rectangle {rect.index} has sigma = {rect.sigma:.4g} but no transition probability")
        total += rect.sigma
        weighted += rect.sigma * float(value)
        used += 1
    if total <= 0.0:
        raise NoReactiveMeasureError(f"no rectangle at E = {measure.E:.8g} carries measure; W is undefined")
    return AveragedProbability(
        E=measure.E,
        n=n,
        m=m,
        W=weighted / total,
        sigma_total=total,
        cells_unconverged=measure.cells_unconverged,
        rectangles_used=used,
        arrangement=arrangement,
    )


def rectangle_bounds(E: float, delta_e: float, rectangles: int) -> list[tuple[float, float, float, float, float]]:
    """(phi_center, phi_lo, phi_hi, E_lo, E_hi) for each rectangle along phi."""
    if rectangles < 1:
        raise DomainError(f"rectangle count must be positive, got {rectangles}")
    if delta_e < 0.0:
        raise DomainError(f"energy window must be non-negative, got {delta_e}")
    width = 2.0 * math.pi / rectangles
    return [
        (width * (i + 0.5), width * i, width * (i + 1), E - 0.5 * delta_e, E + 0.5 * delta_e)
        for i in range(rectangles)
    ]


class MeasureBuilder:
    """Classifies subgrid nodes on demand, caching outcomes by (E, phi)."""

    def __init__(self, classify: Callable[[float, float], Outcome], E: float, delta_e: float, rectangles: int, threads: int = 1):
        self.classify = classify
        self.E = E
        self.delta_e = delta_e
        self.bounds = rectangle_bounds(E, delta_e, rectangles)
        self.threads = threads
        self.cache: dict[tuple[float, float], Outcome] = {}

    def nodes(self, i: int, size: int) -> list[tuple[float, float]]:
        """Nested size x size subgrid of rectangle i at fractions j / size."""
        _, phi_lo, phi_hi, E_lo, E_hi = self.bounds[i]
        energies = [E_lo + (E_hi - E_lo) * (a / size) for a in range(size)]
        phis = [phi_lo + (phi_hi - phi_lo) * (b / size) for b in range(size)]
        return [(e, p) for e in energies for p in phis]

    def classify_all(self, points: Sequence[tuple[float, float]]) -> None:
        todo = sorted({p for p in points if p not in self.cache})
        if not todo:
            return
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                results = list(ex.map(lambda p: self.classify(*p), todo))
        else:
            results = [self.classify(*p) for p in todo]
        for p, r in zip(todo, results):
            self.cache[p] = Outcome(int(r))

    def rectangle(self, i: int, size: int, undecided: str, target: str, converged: bool) -> Rectangle:
        pts = self.nodes(i, size)
        outs = [self.cache[p] for p in pts]
        sigma, hit, counted = sigma_measure(outs, undecided, target)
        center, phi_lo, phi_hi, E_lo, E_hi = self.bounds[i]
        return Rectangle(
            index=i,
            phi_center=center,
            phi_lo=phi_lo,
            phi_hi=phi_hi,
            E_lo=E_lo,
            E_hi=E_hi,
            l=size,
            k=size,
            reactive=hit,
            counted=counted,
            sigma=sigma,
            converged=converged,
            undecided=sum(1 for o in outs if o == Outcome.Undecided),
        )


def refine_until_converged(
    builder: MeasureBuilder,
    tol: float = 0.05,
    max_subdivision: int = 3,
    initial_nodes: int = 2,
    undecided: str = "exclude",
    target: str = "product",
) -> PhaseMeasure:
    """Double each rectangle's subgrid until sigma changes by less than ``tol``.

    Converged rectangles are frozen; after ``max_subdivision`` doublings the
    remaining ones are returned flagged as unconverged.
    """
    _check_policy(undecided, target)
    if max_subdivision < 0 or initial_nodes < 1:
        raise DomainError("max_subdivision must be >= 0 and initial_nodes >= 1")
    count = len(builder.bounds)
    size = initial_nodes
    builder.classify_all([p for i in range(count) for p in builder.nodes(i, size)])
    rects = [builder.rectangle(i, size, undecided, target, converged=False) for i in range(count)]
    active = set(range(count))
    for _ in range(max_subdivision):
        if not active:
            break
        size *= 2
        builder.classify_all([p for i in sorted(active) for p in builder.nodes(i, size)])
        for i in sorted(active):
            new = builder.rectangle(i, size, undecided, target, converged=False)
            if abs(new.sigma - rects[i].sigma) < tol:
                new = replace(new, converged=True)
                active.discard(i)
            rects[i] = new
    if active:
        logger.warning(f"{len(active)} of {count} rectangles unconverged after {max_subdivision} subdivisions")
    return PhaseMeasure(E=builder.E, delta_e=builder.delta_e, rectangles=tuple(rects), undecided_policy=undecided, target=target)


def measure_from_map(
    energies: Sequence[float],
    phases: Sequence[float],
    outcomes,
    E: float,
    delta_e: float,
    rectangles: int,
    undecided: str = "exclude",
    target: str = "product",
) -> PhaseMeasure:
    """Phase measure from an already computed outcome grid (rows E, columns phi).

    Map rows inside [E - dE/2, E + dE/2] and phases inside each rectangle
    form its subgrid; no refinement is possible, so every rectangle is
    reported as converged.
    """
    _check_policy(undecided, target)
    energies = np.asarray(energies, dtype=float)
    phases = np.mod(np.asarray(phases, dtype=float), 2.0 * math.pi)
    outcomes = np.asarray(outcomes, dtype=int)
    tol = 1e-12 * max(1.0, abs(E))
    rows = np.nonzero(np.abs(energies - E) <= 0.5 * delta_e + tol)[0]
    if rows.size == 0:
        raise DomainError(f"no map row lies within the window {E:.8g} +/- {0.5 * delta_e:.3g}")
    rects = []
    for i, (center, lo, hi, E_lo, E_hi) in enumerate(rectangle_bounds(E, delta_e, rectangles)):
        cols = np.nonzero((phases >= lo) & (phases < hi))[0]
        if cols.size == 0:
            raise DomainError(f"rectangle {i} [{lo:.4g}, {hi:.4g}) contains no map phase; use fewer rectangles")
        outs = outcomes[np.ix_(rows, cols)].ravel()
        sigma, hit, counted = sigma_measure(outs, undecided, target)
        rects.append(
            Rectangle(
                index=i,
                phi_center=center,
                phi_lo=lo,
                phi_hi=hi,
                E_lo=E_lo,
                E_hi=E_hi,
                l=int(rows.size),
                k=int(cols.size),
                reactive=hit,
                counted=counted,
                sigma=sigma,
                converged=True,
                undecided=int(np.count_nonzero(outs == int(Outcome.Undecided))),
            )
        )
    return PhaseMeasure(E=E, delta_e=delta_e, rectangles=tuple(rects), undecided_policy=undecided, target=target)
