"""Benders cuts in master-variable space."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

COVER_EPS = 1e-9


class CutKind(str, Enum):
    FEASIBILITY = "feasibility"
    OPTIMALITY = "optimality"


@dataclass(eq=False)
class Cut:
    """``constant + coeff_y @ y <= zeta`` (optimality) or ``<= 0`` (feasibility).

    ``constant`` is ``b @ w`` and ``coeff_y`` is ``-B.T @ w`` for the
    generating dual vector ``w``.
    """

    kind: CutKind
    dual: np.ndarray
    coeff_y: np.ndarray
    constant: float
    source_rank: int
    source_objective: float
    generator: np.ndarray = field(repr=False, default=None)
    density: float = field(init=False)

    def __post_init__(self):
        self.kind = CutKind(self.kind)
        self.coeff_y = np.asarray(self.coeff_y, dtype=float)
        self.dual = np.asarray(self.dual, dtype=float)
        self.constant = float(self.constant)
        m = self.coeff_y.size
        self.density = float(np.count_nonzero(np.abs(self.coeff_y) > COVER_EPS) / m) if m else 0.0

    @property
    def is_feasibility(self) -> bool:
        return self.kind is CutKind.FEASIBILITY

    def lhs(self, y) -> float:
        return self.constant + float(self.coeff_y @ np.asarray(y, dtype=float))

    def violation(self, y, zeta: float = 0.0) -> float:
        """Positive when ``(y, zeta)`` violates the cut."""
        return self.lhs(y) - (0.0 if self.is_feasibility else zeta)

    def same_as(self, other: "Cut", tol: float = 1e-9) -> bool:
        if self.kind is not other.kind:
            return False
        scale = max(1.0, abs(self.constant), float(np.abs(self.coeff_y).max(initial=0.0)))
        return (abs(self.constant - other.constant) <= tol * scale
                and np.allclose(self.coeff_y, other.coeff_y, rtol=0.0, atol=tol * scale))
