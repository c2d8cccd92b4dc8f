"""Phase variable ``U = (v; u; u_t)``."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid, phase_inner_product


@dataclass(frozen=True, eq=False)
class SystemState:
    """Fluid velocity on interior faces, plate displacement and plate velocity.

    The tangential fluid velocity on Omega is not stored separately: it *is*
    ``w`` (the plate velocity), so the interface condition holds by
    construction.
    """

    grid: Grid
    v: np.ndarray
    u: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        g = self.grid
        for name, n in (("v", g.n_velocity), ("u", g.n_plate), ("w", g.n_plate)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> "SystemState":
        return cls(grid, np.zeros(grid.n_velocity), np.zeros(grid.n_plate), np.zeros(grid.n_plate), t)

    def with_time(self, t: float) -> "SystemState":
        return replace(self, t=t)

    def norm(self) -> float:
        return float(np.sqrt(max(phase_inner_product(self, self), 0.0)))

    def __sub__(self, other: "SystemState") -> "SystemState":
        return SystemState(self.grid, self.v - other.v, self.u - other.u, self.w - other.w, self.t)

    def __add__(self, other: "SystemState") -> "SystemState":
        return SystemState(self.grid, self.v + other.v, self.u + other.u, self.w + other.w, self.t)

    def scaled(self, c: float) -> "SystemState":
        return SystemState(self.grid, c * self.v, c * self.u, c * self.w, self.t)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.v, self.u, self.w])
