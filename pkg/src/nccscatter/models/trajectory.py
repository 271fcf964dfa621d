"""Result containers for classical geodesic runs."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class Outcome(IntEnum):
    """Fate of a trajectory; the integer values are the CSV codes."""

    NonReactive = 0
    Reactive = 1
    Undecided = 2


@dataclass(frozen=True)
class GeodesicState:
    """One sample of a geodesic.

    ``x`` is (u, v, theta) and ``xdot`` its derivative with respect to the
    natural parameter s. ``q`` and ``qdot`` hold the same state in the
    mass-scaled frame (q0, q1, theta) used for integration.
    """

    x: tuple[float, float, float]
    xdot: tuple[float, float, float]
    s: float
    I: float = 0.0
    q: tuple[float, float, float] = (0.0, 0.0, 0.0)
    qdot: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def u(self) -> float:
        return self.x[0]

    @property
    def v(self) -> float:
        return self.x[1]

    @property
    def theta(self) -> float:
        return self.x[2]


@dataclass(frozen=True)
class GeodesicTrajectory:
    samples: tuple[GeodesicState, ...]
    conserved_norm: np.ndarray
    outcome: Outcome
    initial_phase: float
    energy: float
    terminated: str = "s_max"

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def norm_drift(self) -> float:
        """Largest relative deviation of the conserved norm from its first value."""
        if len(self.conserved_norm) == 0:
            return 0.0
        ref = self.conserved_norm[0]
        return float(np.max(np.abs(self.conserved_norm - ref)) / abs(ref))

    def column(self, name: str) -> np.ndarray:
        """Per-sample array of s, u, v, theta, du_ds, dv_ds or dtheta_ds."""
        getters = {
            "s": lambda st: st.s,
            "u": lambda st: st.x[0],
            "v": lambda st: st.x[1],
            "theta": lambda st: st.x[2],
            "du_ds": lambda st: st.xdot[0],
            "dv_ds": lambda st: st.xdot[1],
            "dtheta_ds": lambda st: st.xdot[2],
        }
        return np.array([getters[name](st) for st in self.samples])


@dataclass(frozen=True)
class ChaosMap:
    """Outcome grid over energy (rows) and initial phase (columns)."""

    energies: np.ndarray
    phases: np.ndarray
    outcomes: np.ndarray
    n: int = 0
    lyapunov: np.ndarray | None = None
    failures: int = 0
    failed_cells: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    @property
    def shape(self) -> tuple[int, int]:
        return self.outcomes.shape

    def counts(self) -> dict[str, int]:
        return {o.name: int(np.count_nonzero(self.outcomes == int(o))) for o in Outcome}

    def rows(self):
        """Row-major (E outer, phi inner) iteration of (E, phi, outcome, lyapunov)."""
        for i, E in enumerate(self.energies):
            for k, phi in enumerate(self.phases):
                lyap = None if self.lyapunov is None else float(self.lyapunov[i, k])
                yield float(E), float(phi), Outcome(int(self.outcomes[i, k])), lyap
