"""
Time discretization of ([0, T], mu).

Step j covers [t_j, t_{j+1}) and carries weight w_j ~ mu([t_j, t_{j+1})).
Quadrature is left-point throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from mie.errors import InvalidArgumentError

Density = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ordered nodes 0 = t_0 < ... < t_N = T with nonnegative step weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)

        if nodes.ndim != 1 or len(nodes) < 2:
            raise InvalidArgumentError("a grid needs at least two nodes (N >= 1)")
        if nodes[0] != 0.0:
            raise InvalidArgumentError(f"first node must be 0, got {nodes[0]}")
        if not np.all(np.isfinite(nodes)) or np.any(np.diff(nodes) <= 0):
            raise InvalidArgumentError("nodes must be finite and strictly increasing")
        if weights.shape != (len(nodes) - 1,):
            raise InvalidArgumentError(f"expected {len(nodes) - 1} weights, got shape {weights.shape}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise InvalidArgumentError("weights must be finite and nonnegative")

        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def index_of(self, t: float) -> int:
        """Index of the node closest to time t."""
        return int(np.argmin(np.abs(self.nodes - t)))

    def same_nodes(self, other: "TimeGrid") -> bool:
        return self.nodes.shape == other.nodes.shape and bool(np.all(self.nodes == other.nodes))


def build_uniform(T: float, N: int, density: Optional[Density] = None) -> TimeGrid:
    """
    Uniform grid t_j = jT/N with left-point weights.

    Args:
        T: Horizon, T > 0.
        N: Number of steps, N >= 1.
        density: Optional nonnegative density of mu against Lebesgue measure.
            Lebesgue measure when omitted.

    Returns:
        TimeGrid with weights (T/N) * density(t_j).
    """
    if not (np.isfinite(T) and T > 0):
        raise InvalidArgumentError(f"T must be positive, got {T}")
    if int(N) != N or N < 1:
        raise InvalidArgumentError(f"N must be a positive integer, got {N}")
    N = int(N)

    nodes = np.linspace(0.0, T, N + 1)
    weights = np.full(N, T / N)
    if density is not None:
        dens = np.asarray(density(nodes[:-1]), dtype=float) * np.ones(N)
        if not np.all(np.isfinite(dens)) or np.any(dens < 0):
            raise InvalidArgumentError("density must be nonnegative and finite on [0, T]")
        weights = weights * dens
    return TimeGrid(nodes, weights)


def from_nodes(nodes: Sequence[float], weights: Optional[Sequence[float]] = None) -> TimeGrid:
    """Grid on explicit nodes; weights default to the step lengths (Lebesgue)."""
    nodes = np.asarray(nodes, dtype=float)
    if weights is None:
        weights = np.diff(nodes)
    return TimeGrid(nodes, np.asarray(weights, dtype=float))


def integrate(grid: TimeGrid, values, j_from: int = 0, j_to: Optional[int] = None) -> np.ndarray:
    """
    Left-point quadrature sum_{j=j_from}^{j_to-1} w_j * values[j].

    ``values`` is indexed by node along its first axis (length N or N + 1);
    any trailing shape is kept. An empty range returns zeros.
    """
    values = np.asarray(values, dtype=float)
    N = grid.steps
    if j_to is None:
        j_to = N
    if not (0 <= j_from <= j_to <= N):
        raise InvalidArgumentError(f"need 0 <= j_from <= j_to <= {N}, got ({j_from}, {j_to})")
    if values.ndim == 0 or values.shape[0] < j_to:
        raise InvalidArgumentError(f"values must cover nodes up to {j_to - 1}")
    return np.tensordot(grid.weights[j_from:j_to], values[j_from:j_to], axes=1)


def density_from_config(entry: Union[None, str, Mapping[str, Sequence[float]]]) -> Optional[Density]:
    """Density from a config entry: "lebesgue", "linear" or a {times, values} table."""
    if entry is None or entry == "lebesgue":
        return None
    if entry == "linear":
        return lambda t: np.asarray(t, dtype=float)
    if isinstance(entry, Mapping):
        times = np.asarray(entry.get("times", []), dtype=float)
        samples = np.asarray(entry.get("values", []), dtype=float)
        if times.ndim != 1 or times.shape != samples.shape or len(times) < 1:
            raise InvalidArgumentError("density table needs equal-length 'times' and 'values'")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("density table times must be strictly increasing")
        return lambda t: np.interp(t, times, samples)
    raise InvalidArgumentError(f"unknown density {entry!r}")
