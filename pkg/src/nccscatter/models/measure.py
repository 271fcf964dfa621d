"""Phase-measure containers."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Rectangle:
    """One [E_lo, E_hi] x [phi_lo, phi_hi) cell of the phase measure.

    ``l`` x ``k`` is the subgrid size; ``counted`` (M_i) is the number of
    nodes that entered the ratio and ``reactive`` (N_i) those that reached
    the target arrangement.
    """

    index: int
    phi_center: float
    phi_lo: float
    phi_hi: float
    E_lo: float
    E_hi: float
    l: int
    k: int
    reactive: int
    counted: int
    sigma: float
    converged: bool = True
    undecided: int = 0


@dataclass(frozen=True)
class PhaseMeasure:
    E: float
    delta_e: float
    rectangles: tuple[Rectangle, ...]
    undecided_policy: str = "exclude"
    target: str = "product"

    @property
    def sigmas(self) -> list[float]:
        return [r.sigma for r in self.rectangles]

    @property
    def sigma_total(self) -> float:
        return float(sum(r.sigma for r in self.rectangles))

    @property
    def cells_unconverged(self) -> int:
        return sum(1 for r in self.rectangles if not r.converged)

    @property
    def is_regular(self) -> bool:
        """True when every rectangle is entirely reactive or entirely not."""
        return all(r.sigma in (0.0, 1.0) for r in self.rectangles)


@dataclass(frozen=True)
class AveragedProbability:
    E: float
    n: int
    m: int
    W: float
    sigma_total: float
    cells_unconverged: int
    rectangles_used: int
    arrangement: str = "product"
