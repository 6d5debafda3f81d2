"""
Shared containers for coefficient fields, compact boxes and box domains.

Coefficient fields are indexed by grid step j = 0..N-1 and state x. A field
may be given as a constant, a per-state array, or a per-(step, state) array;
the layout is read off the number of leading axes in front of the value shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from mie.errors import InvalidArgumentError


LAYOUTS = ("constant", "per_state", "per_node_state")


# =========================
# NODE FIELDS
# =========================


class NodeField:
    """A coefficient a(t_j, x) with a fixed value shape.

    Args:
        value: Array-like coefficient data.
        shape: Value shape at a single (j, x), e.g. () or (k,) or (k, k).
        out_shape: Shape returned by ``at``; defaults to ``shape``. Used to lift
            scalar k = 1 data to (1,) or (1, 1).
        name: Used in error messages.
    """

    def __init__(self, value, shape: Tuple[int, ...] = (), out_shape: Optional[Tuple[int, ...]] = None, name: str = "field"):
        arr = np.asarray(value, dtype=float)
        shape = tuple(shape)
        lead = arr.ndim - len(shape)
        if lead not in (0, 1, 2) or tuple(arr.shape[lead:]) != shape:
            raise InvalidArgumentError(f"{name}: expected value shape {shape}, got array of shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError(f"{name}: values must be finite")

        self.name = name
        self.shape = shape
        self.out_shape = tuple(out_shape) if out_shape is not None else shape
        self.layout = LAYOUTS[lead]
        self._arr = arr

    @property
    def raw(self) -> np.ndarray:
        return self._arr

    def validate(self, steps: int, states: int) -> None:
        """Raise if the leading axes do not match the chain dimensions."""
        if self.layout == "per_state" and self._arr.shape[0] != states:
            raise InvalidArgumentError(f"{self.name}: per-state field has {self._arr.shape[0]} rows, chain has {states} states")
        if self.layout == "per_node_state" and self._arr.shape[:2] != (steps, states):
            raise InvalidArgumentError(
                f"{self.name}: per-(node, state) field has shape {self._arr.shape[:2]}, expected ({steps}, {states})"
            )

    def at(self, j: int, states: np.ndarray) -> np.ndarray:
        """Values at step j for the given state indices, shape (len(states), *out_shape)."""
        states = np.asarray(states, dtype=int)
        if self.layout == "constant":
            base = np.broadcast_to(self._arr, (len(states),) + self.shape)
        elif self.layout == "per_state":
            base = self._arr[states]
        else:
            base = self._arr[j][states]
        return np.reshape(base, (len(states),) + self.out_shape)

    def full(self, steps: int, states: int) -> np.ndarray:
        """Dense array of shape (steps, states, *out_shape)."""
        self.validate(steps, states)
        idx = np.arange(states)
        return np.stack([self.at(j, idx) for j in range(steps)])

    def distinct_values(self) -> np.ndarray:
        """Distinct values over all (j, x), shape (m, *out_shape)."""
        flat = np.reshape(self._arr, (-1,) + self.shape)
        uniq = np.unique(flat, axis=0)
        return np.reshape(uniq, (len(uniq),) + self.out_shape)

    def __repr__(self) -> str:
        return f"NodeField({self.name!r}, layout={self.layout}, shape={self.out_shape})"


def scalar_field(value, name: str = "field") -> NodeField:
    if isinstance(value, NodeField):
        return value
    return NodeField(value, (), name=name)


def vector_field(value, k: int, name: str = "field") -> NodeField:
    """Vector-valued field in R^k. For k = 1 the data is scalar-valued."""
    if isinstance(value, NodeField):
        return value
    if k == 1:
        return NodeField(value, (), out_shape=(1,), name=name)
    return NodeField(value, (k,), name=name)


def matrix_field(value, k: int, name: str = "field") -> NodeField:
    """Matrix-valued field in R^{k x k}. For k = 1 the data is scalar-valued."""
    if isinstance(value, NodeField):
        return value
    if k == 1:
        return NodeField(value, (), out_shape=(1, 1), name=name)
    return NodeField(value, (k, k), name=name)


def terminal_array(g, states: int, k: Optional[int] = None, name: str = "g") -> np.ndarray:
    """Terminal data as an array of shape (states, k).

    A 1-D array of length ``states`` is read as scalar data (k = 1).
    """
    arr = np.asarray(g, dtype=float)
    if arr.ndim == 0:
        arr = np.full((states,), float(arr))
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != states:
        raise InvalidArgumentError(f"{name}: expected {states} per-state values, got shape {np.shape(g)}")
    if k is not None and arr.shape[1] != k:
        raise InvalidArgumentError(f"{name}: expected dimension {k}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name}: values must be finite")
    return arr


# =========================
# BOXES AND DOMAINS
# =========================


def lattice_size(k: int) -> int:
    """Points per axis for deterministic lattices: 17, or fewer so that the total stays within 289."""
    if k <= 2:
        return 17
    return max(2, int(np.floor(289 ** (1.0 / k) + 1e-9)))


@dataclass(frozen=True, eq=False)
class Box:
    """Compact box K = [lower_1, upper_1] x ... x [lower_k, upper_k]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("box bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise InvalidArgumentError(f"box lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def hull(cls, values: np.ndarray) -> "Box":
        """Smallest box containing every row of ``values[..., k]``, NaN rows ignored."""
        arr = np.asarray(values, dtype=float)
        flat = arr.reshape(-1, arr.shape[-1])
        flat = flat[np.all(np.isfinite(flat), axis=1)]
        if len(flat) == 0:
            raise InvalidArgumentError("cannot take the hull of an empty set")
        return cls(flat.min(axis=0), flat.max(axis=0))

    @property
    def k(self) -> int:
        return len(self.lower)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def sup_norm(self) -> float:
        """sup over w in K of the Euclidean norm |w|."""
        corner = np.maximum(np.abs(self.lower), np.abs(self.upper))
        return float(np.linalg.norm(corner))

    def widened(self, beta: float) -> "Box":
        return Box(self.lower - beta, self.upper + beta)

    def union(self, other: "Box") -> "Box":
        return Box(np.minimum(self.lower, other.lower), np.maximum(self.upper, other.upper))

    def lattice(self, points_per_axis: Optional[int] = None) -> np.ndarray:
        """Deterministic grid of points in K, shape (P, k)."""
        p = points_per_axis or lattice_size(self.k)
        axes = [np.unique(np.linspace(lo, hi, p)) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True, eq=False)
class Domain:
    """Box domain D, a product of intervals with open or closed ends.

    Infinite bounds stand for unbounded coordinates; their closed flags are ignored.
    """

    lower: np.ndarray
    upper: np.ndarray
    lower_closed: np.ndarray
    upper_closed: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lc = np.broadcast_to(np.asarray(self.lower_closed, dtype=bool), lo.shape).copy()
        uc = np.broadcast_to(np.asarray(self.upper_closed, dtype=bool), hi.shape).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("domain bounds must be 1-D arrays of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo >= hi):
            raise InvalidArgumentError(f"domain must have nonempty interior, got lower {lo}, upper {hi}")
        lc &= np.isfinite(lo)
        uc &= np.isfinite(hi)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "lower_closed", lc)
        object.__setattr__(self, "upper_closed", uc)

    @classmethod
    def whole(cls, k: int = 1) -> "Domain":
        return cls(np.full(k, -np.inf), np.full(k, np.inf), False, False)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], lower_closed=False, upper_closed=False) -> "Domain":
        return cls(lower, upper, lower_closed, upper_closed)

    @classmethod
    def nonnegative(cls, k: int = 1) -> "Domain":
        """[0, inf)^k"""
        return cls(np.zeros(k), np.full(k, np.inf), True, False)

    @property
    def k(self) -> int:
        return len(self.lower)

    @property
    def is_whole(self) -> bool:
        return bool(np.all(np.isinf(self.lower)) and np.all(np.isinf(self.upper)))

    def contains(self, w: np.ndarray, closure: bool = False) -> np.ndarray:
        """Membership of each row of ``w[..., k]``; non-finite rows are outside."""
        w = np.asarray(w, dtype=float)
        lc = self.lower_closed | (closure & np.isfinite(self.lower))
        uc = self.upper_closed | (closure & np.isfinite(self.upper))
        above = np.where(lc, w >= self.lower, w > self.lower)
        below = np.where(uc, w <= self.upper, w < self.upper)
        return np.all(above & below & np.isfinite(w), axis=-1)

    def distance_to_boundary(self, w: np.ndarray) -> np.ndarray:
        """dist(w, boundary of D) for each row; 0 outside D, inf for D = R^k."""
        w = np.asarray(w, dtype=float)
        gap = np.minimum(w - self.lower, self.upper - w)
        dist = np.min(gap, axis=-1)
        return np.where(self.contains(w, closure=True), np.maximum(dist, 0.0), 0.0)

    def closure(self) -> "Domain":
        return Domain(self.lower, self.upper, True, True)

    def reflected(self) -> "Domain":
        """-D = {-w : w in D}"""
        return Domain(-self.upper, -self.lower, self.upper_closed, self.lower_closed)

    def contains_box(self, box: Box) -> bool:
        """Whether K lies in the closure of D."""
        corners = np.stack([box.lower, box.upper])
        return bool(np.all(self.contains(corners, closure=True)))

    def describe(self) -> str:
        parts = []
        for lo, hi, lc, uc in zip(self.lower, self.upper, self.lower_closed, self.upper_closed):
            parts.append(f"{'[' if lc else '('}{lo}, {hi}{']' if uc else ')'}")
        return " x ".join(parts)
