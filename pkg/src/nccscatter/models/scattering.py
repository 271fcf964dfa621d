"""Scattering-matrix container."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScatteringMatrix:
    """S-matrix over the open reactant and product channels at one energy.

    Rows are outgoing and columns incoming channels, both ordered
    [reactant open..., product open...]. ``amplitudes`` is ``None`` for a
    resonant tube where no amplitudes are defined.
    """

    energy: float
    p_reactant: np.ndarray
    p_product: np.ndarray
    amplitudes: np.ndarray | None
    unitarity_residual: float
    mode: str = "static"
    phi: float | None = None
    resonant: bool = False
    u_interval: tuple[float, float] | None = None

    @property
    def n_reactant(self) -> int:
        return int(self.p_reactant.size)

    @property
    def n_product(self) -> int:
        return int(self.p_product.size)

    def labels(self) -> list[tuple[str, int]]:
        return [("reactant", n) for n in range(self.n_reactant)] + [("product", n) for n in range(self.n_product)]

    def index(self, arrangement: str, n: int) -> int:
        if arrangement == "reactant" and 0 <= n < self.n_reactant:
            return n
        if arrangement == "product" and 0 <= n < self.n_product:
            return self.n_reactant + n
        raise IndexError(f"no open {arrangement} channel {n}")

    def element(self, out: tuple[str, int], inc: tuple[str, int]) -> complex:
        if self.amplitudes is None:
            raise ValueError("resonant tube has no amplitudes")
        return complex(self.amplitudes[self.index(*out), self.index(*inc)])

    def transition(self, n: int, m: int) -> complex:
        """Reactant channel n -> product channel m."""
        return self.element(("product", m), ("reactant", n))

    def probabilities(self) -> np.ndarray:
        if self.amplitudes is None:
            raise ValueError("resonant tube has no amplitudes")
        return np.abs(self.amplitudes) ** 2

    def reaction_probabilities(self) -> np.ndarray:
        """|S_{m <- n}|^2 for reactant n (rows) into product m (columns)."""
        P = self.probabilities()
        return P[self.n_reactant :, : self.n_reactant].T

    def reflection_probabilities(self) -> np.ndarray:
        P = self.probabilities()
        return P[: self.n_reactant, : self.n_reactant].T
