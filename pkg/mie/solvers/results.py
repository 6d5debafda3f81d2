"""Solution fields, solver options and solve reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from mie.config import settings
from mie.errors import InvalidArgumentError
from mie.model.timegrid import TimeGrid

EVALUATIONS = ("propagated", "slice")


@dataclass(eq=False)
class SolutionField:
    """u[j, x, :] for nodes j = 0..N; nodes before ``start_index`` are NaN."""

    grid: TimeGrid
    values: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[0] != self.grid.steps + 1:
            raise InvalidArgumentError(
                f"field must have shape (N + 1, S, k) with N = {self.grid.steps}, got {self.values.shape}"
            )
        if not (0 <= self.start_index <= self.grid.steps):
            raise InvalidArgumentError(f"start index {self.start_index} out of range")

    @property
    def k(self) -> int:
        return self.values.shape[2]

    @property
    def state_count(self) -> int:
        return self.values.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def valid(self) -> np.ndarray:
        """Values on the computed nodes start_index..N."""
        return self.values[self.start_index:]

    def scalar(self) -> np.ndarray:
        """Values of a k = 1 field as shape (N + 1, S)."""
        if self.k != 1:
            raise InvalidArgumentError(f"expected a scalar field, got k = {self.k}")
        return self.values[..., 0]


@dataclass
class SolverOptions:
    """Solver knobs; defaults come from the environment settings."""

    max_iter: int = field(default_factory=lambda: settings.MAX_ITER)
    tol: float = field(default_factory=lambda: settings.TOL)
    damping: float = 1.0
    evaluation: str = "propagated"
    clip_depth: int = field(default_factory=lambda: settings.CLIP_DEPTH)
    blowup_threshold: float = field(default_factory=lambda: settings.BLOWUP_THRESHOLD)

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidArgumentError(f"max_iter must be positive, got {self.max_iter}")
        if not self.tol > 0:
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if not (0.0 < self.damping <= 1.0):
            raise InvalidArgumentError(f"damping must lie in (0, 1], got {self.damping}")
        if self.evaluation not in EVALUATIONS:
            raise InvalidArgumentError(f"evaluation must be one of {EVALUATIONS}, got {self.evaluation!r}")
        if self.clip_depth < 1:
            raise InvalidArgumentError(f"clip_depth must be positive, got {self.clip_depth}")
        if not self.blowup_threshold > 0:
            raise InvalidArgumentError(f"blowup_threshold must be positive, got {self.blowup_threshold}")


# =========================
# REPORTS
# =========================


class BlowupRecord(BaseModel):
    t_minus_estimate: float
    trigger: Literal["boundary", "growth"]
    halt_index: int
    trace: List[Optional[float]] = Field(default_factory=list)


class SolveReport(BaseModel):
    converged: bool
    iterations: int
    final_residual: float
    defect: Optional[float] = None
    blowup: Optional[BlowupRecord] = None
    lipschitz_mass: Optional[float] = None
    lipschitz_estimated: bool = False
    increments: List[float] = Field(default_factory=list)
    tail_bound_ok: Optional[bool] = None
    level_differences: List[float] = Field(default_factory=list)
    levels_decreasing: Optional[bool] = None
    interval: Tuple[float, float]
    condition_trace: List[Optional[float]] = Field(default_factory=list)
