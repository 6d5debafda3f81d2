"""
Time-inhomogeneous finite-state Markov chains.

Expectations are exact backward matrix products; path sampling is a
vectorized inverse-CDF walk driven by numpy's default_rng.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mie.config import settings
from mie.errors import CapacityError, InvalidArgumentError
from mie.model.timegrid import TimeGrid

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MarkovChainModel:
    """One row-stochastic matrix P_j per grid step; P_j[x, y] = P(X_{j+1} = y | X_j = x)."""

    transitions: np.ndarray

    def __post_init__(self):
        P = np.array(self.transitions, dtype=float)
        if P.ndim != 3 or P.shape[1] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise InvalidArgumentError(f"transitions must have shape (N, S, S), got {P.shape}")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise InvalidArgumentError("transition probabilities must be finite and nonnegative")
        worst = float(np.max(np.abs(P.sum(axis=2) - 1.0)))
        if worst > ROW_SUM_TOL:
            raise InvalidArgumentError(f"transition rows must sum to 1 (worst deviation {worst:.3e})")
        P.setflags(write=False)
        object.__setattr__(self, "transitions", P)

    @classmethod
    def identity(cls, steps: int, states: int) -> "MarkovChainModel":
        return cls(np.broadcast_to(np.eye(states), (steps, states, states)))

    @classmethod
    def uniform(cls, steps: int, states: int) -> "MarkovChainModel":
        return cls(np.full((steps, states, states), 1.0 / states))

    @classmethod
    def homogeneous(cls, matrix: Sequence[Sequence[float]], steps: int) -> "MarkovChainModel":
        P = np.asarray(matrix, dtype=float)
        return cls(np.broadcast_to(P, (steps,) + P.shape))

    @property
    def steps(self) -> int:
        return self.transitions.shape[0]

    @property
    def state_count(self) -> int:
        return self.transitions.shape[1]

    def step(self, j: int, phi: np.ndarray) -> np.ndarray:
        """One-step expectation E_{t_j, x}[phi(X_{t_{j+1}})] = P_j phi (any trailing shape)."""
        return np.tensordot(self.transitions[j], phi, axes=1)

    def check_grid(self, grid: TimeGrid) -> None:
        if grid.steps != self.steps:
            raise InvalidArgumentError(f"chain has {self.steps} steps, grid has {grid.steps}")


def _check_phi(chain: MarkovChainModel, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0 or phi.shape[0] != chain.state_count:
        raise InvalidArgumentError(f"phi must have {chain.state_count} rows, got shape {phi.shape}")
    return phi


def expectation(chain: MarkovChainModel, j_from: int, j_to: int, phi) -> np.ndarray:
    """
    E_{t_{j_from}, x}[phi(X_{t_{j_to}})] for every state x.

    Args:
        chain: The chain.
        j_from: Start node.
        j_to: End node, j_from <= j_to <= N.
        phi: Per-state values, shape (S,) or (S, k).

    Returns:
        (P_{j_from} ... P_{j_to - 1}) phi, same shape as phi.
    """
    phi = _check_phi(chain, phi)
    if not (0 <= j_from <= j_to <= chain.steps):
        raise InvalidArgumentError(f"need 0 <= j_from <= j_to <= {chain.steps}, got ({j_from}, {j_to})")
    out = phi.copy()
    for j in range(j_to - 1, j_from - 1, -1):
        out = chain.step(j, out)
    return out


def propagate_all(chain: MarkovChainModel, phi) -> np.ndarray:
    """E_{t_j, x}[phi(X_T)] for every node j, shape (N + 1, *phi.shape)."""
    phi = _check_phi(chain, phi)
    out = np.empty((chain.steps + 1,) + phi.shape)
    out[-1] = phi
    for j in range(chain.steps - 1, -1, -1):
        out[j] = chain.step(j, out[j + 1])
    return out


# =========================
# PATH SAMPLING
# =========================


@dataclass(frozen=True, eq=False)
class PathSample:
    """One realization X_{t_start}, ..., X_{t_N}."""

    start_index: int
    states: Tuple[int, ...]
    seed: int

    def state_at(self, j: int) -> int:
        return self.states[j - self.start_index]


def sample_state_matrix(chain: MarkovChainModel, j_from: int, x: int, count: int, seed: Union[int, Sequence[int]]) -> np.ndarray:
    """Sampled states as an int array of shape (count, N - j_from + 1).

    ``seed`` is anything numpy's default_rng accepts as entropy.
    """
    S = chain.state_count
    if not (0 <= x < S):
        raise InvalidArgumentError(f"state {x} out of range for {S} states")
    if not (0 <= j_from <= chain.steps):
        raise InvalidArgumentError(f"start node {j_from} out of range")
    if count < 1:
        raise InvalidArgumentError(f"count must be positive, got {count}")

    rng = np.random.default_rng(seed)
    paths = np.empty((count, chain.steps - j_from + 1), dtype=np.int64)
    paths[:, 0] = x
    for col, j in enumerate(range(j_from, chain.steps), start=1):
        cum = np.cumsum(chain.transitions[j], axis=1)
        cum /= cum[:, -1:]
        cum[:, -1] = 1.0
        u = 1.0 - rng.random(count)  # (0, 1]
        rows = cum[paths[:, col - 1]]
        paths[:, col] = np.minimum((rows < u[:, None]).sum(axis=1), S - 1)
    return paths


def sample_paths(chain: MarkovChainModel, j_from: int, x: int, count: int, seed: int) -> List[PathSample]:
    """``count`` independent paths started at (t_{j_from}, x); deterministic given seed."""
    paths = sample_state_matrix(chain, j_from, x, count, seed)
    return [PathSample(j_from, tuple(int(s) for s in row), seed) for row in paths]


# =========================
# PATH LIFT
# =========================


def history_index(history: Sequence[int], steps: int, states: int) -> int:
    """Index of the stopped path (x_0, ..., x_j, x_j, ..., x_j) of length N + 1."""
    if len(history) < 1 or len(history) > steps + 1:
        raise InvalidArgumentError(f"history length must be in [1, {steps + 1}]")
    padded = list(history) + [history[-1]] * (steps + 1 - len(history))
    idx = 0
    for s in padded:
        if not (0 <= s < states):
            raise InvalidArgumentError(f"state {s} out of range")
        idx = idx * states + int(s)
    return idx


def history_of(index: int, steps: int, states: int) -> Tuple[int, ...]:
    """Inverse of ``history_index``: the full stopped path of length N + 1."""
    digits = []
    for _ in range(steps + 1):
        index, r = divmod(index, states)
        digits.append(r)
    return tuple(reversed(digits))


def path_lift(chain: MarkovChainModel, grid: Optional[TimeGrid] = None, budget: Optional[int] = None) -> MarkovChainModel:
    """
    Chain whose state at node j is the history (x_0, ..., x_j).

    Histories are stored as stopped paths of length N + 1 (positions after j
    repeat x_j). The base state x corresponds to the constant path, see
    ``history_index((x,), N, S)``. Step j moves z to z' with z'_i = y for
    i > j, with probability P_j[z_j, y].
    """
    if grid is not None:
        chain.check_grid(grid)
    budget = settings.PATH_LIFT_BUDGET if budget is None else budget
    N, S = chain.steps, chain.state_count
    required = S ** (N + 1)
    if required > budget:
        raise CapacityError(required, budget)

    histories = list(itertools.product(range(S), repeat=N + 1))
    lifted = np.zeros((N, required, required))
    for j in range(N):
        for z_idx, z in enumerate(histories):
            for y in range(S):
                p = chain.transitions[j, z[j], y]
                if p == 0.0:
                    continue
                target = history_index(z[: j + 1] + (y,), N, S)
                lifted[j, z_idx, target] += p

    logger.debug("[PathLift] lifted %d states over %d steps to %d histories", S, N, required)
    return MarkovChainModel(lifted)


def lift_terminal(phi, steps: int, states: int) -> np.ndarray:
    """Lift a function of the terminal coordinate to history states."""
    phi = np.asarray(phi, dtype=float)
    return np.stack([phi[h[-1]] for h in itertools.product(range(states), repeat=steps + 1)])
