"""
Discrete realizations of the propagator Sigma_{r,t} along a path:
alternating series, ordered products of I - w b, and the exact exponential
for commuting families.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from mie.errors import InvalidArgumentError, PreconditionError
from mie.model.fields import NodeField, matrix_field
from mie.model.markov import PathSample
from mie.model.timegrid import TimeGrid

logger = logging.getLogger(__name__)

COMMUTE_TOL = 1e-12
SINGULAR_COND = 1e12


@dataclass
class SigmaResult:
    matrix: np.ndarray
    norm_bound: float
    invertible: bool = True
    tail_bound: float = 0.0


def _check_range(grid: TimeGrid, j_from: int, j_to: int) -> None:
    if not (0 <= j_from <= j_to <= grid.steps):
        raise InvalidArgumentError(f"need 0 <= j_from <= j_to <= {grid.steps}, got ({j_from}, {j_to})")


def _path_matrices(b_along_path, grid: TimeGrid) -> np.ndarray:
    """b along a path as shape (N, k, k): scalar, (N,), (k, k) or (N, k, k)."""
    b = np.asarray(b_along_path, dtype=float)
    N = grid.steps
    if b.ndim == 0:
        return np.full((N, 1, 1), float(b))
    if b.ndim == 1:
        if len(b) != N:
            raise InvalidArgumentError(f"expected {N} per-step values, got {len(b)}")
        return b[:, None, None]
    if b.ndim == 2 and b.shape[0] == b.shape[1]:
        return np.broadcast_to(b, (N,) + b.shape)
    if b.ndim == 3 and b.shape[0] == N and b.shape[1] == b.shape[2]:
        return b
    raise InvalidArgumentError(f"cannot read b of shape {b.shape} as per-step square matrices")


def norm_bound(b_mats: np.ndarray, weights: np.ndarray) -> float:
    """sqrt(k) exp(sum_j w_j |b_j|_F)"""
    k = b_mats.shape[-1]
    mass = float(np.dot(weights, np.linalg.norm(b_mats, axis=(1, 2)))) if len(weights) else 0.0
    return math.sqrt(k) * math.exp(mass)


# =========================
# SERIES
# =========================


def sigma_series(b_along_path, grid: TimeGrid, j_from: int, j_to: int, order: int) -> SigmaResult:
    """
    sum_{n <= order} (-1)^n Sigma^(n) with
    Sigma^(n)_{l, j_to} = w_l b_l Sigma^(n-1)_{l+1, j_to} + Sigma^(n)_{l+1, j_to}.

    Each Sigma^(n) is checked against sqrt(k) Lambda^n / n!; the reported
    tail bound is sqrt(k) e^Lambda Lambda^{order+1} / (order+1)!.

    The term bound follows from submultiplicativity of the Frobenius norm and
    holds for any finite b, so an excess can only come from rounding in the
    recursion. It is logged as a warning and the computed sum is returned.
    """
    if order < 0:
        raise InvalidArgumentError(f"order must be nonnegative, got {order}")
    _check_range(grid, j_from, j_to)
    b = _path_matrices(b_along_path, grid)
    if not np.all(np.isfinite(b)):
        raise InvalidArgumentError("b must be finite along the path")
    k = b.shape[-1]
    w = grid.weights

    terms = np.zeros((order + 1, k, k))
    terms[0] = np.eye(k)
    for l in range(j_to - 1, j_from - 1, -1):
        wb = w[l] * b[l]
        # descending n so terms[n - 1] still holds the l + 1 value
        for n in range(order, 0, -1):
            terms[n] = wb @ terms[n - 1] + terms[n]

    lam = float(np.dot(w[j_from:j_to], np.linalg.norm(b[j_from:j_to], axis=(1, 2))))
    for n in range(order + 1):
        limit = math.sqrt(k) * (lam ** n) / math.factorial(n)
        if np.linalg.norm(terms[n]) > limit * (1 + 1e-9) + 1e-14:
            logger.warning("[Sigma] term %d exceeds its norm bound", n)

    signs = (-1.0) ** np.arange(order + 1)
    value = np.tensordot(signs, terms, axes=1)
    tail = math.sqrt(k) * math.exp(lam) * math.exp((order + 1) * math.log(lam) - math.lgamma(order + 2)) if lam > 0 else 0.0
    return SigmaResult(value, norm_bound(b[j_from:j_to], w[j_from:j_to]), True, tail)


# =========================
# ORDERED PRODUCT
# =========================


class SigmaPropagator:
    """Per-(step, state) factors M_j(x) = I_k - w_j b(t_j, x)."""

    def __init__(self, grid: TimeGrid, b_field, k: int = 1):
        self.grid = grid
        self.k = k
        self.b: NodeField = matrix_field(b_field, k, name="b")

    def b_at(self, j: int, x: int) -> np.ndarray:
        return self.b.at(j, np.array([x]))[0]

    def factor(self, j: int, x: int) -> np.ndarray:
        return np.eye(self.k) - self.grid.weights[j] * self.b_at(j, x)

    def along(self, path, j_from: int, j_to: int) -> np.ndarray:
        """b(t_j, x_j) for j_from <= j < j_to, shape (j_to - j_from, k, k)."""
        states = _path_states(path, j_from, j_to)
        if j_to == j_from:
            return np.zeros((0, self.k, self.k))
        return np.stack([self.b_at(j, x) for j, x in zip(range(j_from, j_to), states)])


def _path_states(path: Union[PathSample, Sequence[int]], j_from: int, j_to: int) -> list:
    if isinstance(path, PathSample):
        if j_from < path.start_index or j_to - path.start_index > len(path.states):
            raise InvalidArgumentError("path does not cover the index range")
        return [path.state_at(j) for j in range(j_from, j_to)]
    seq = list(path)
    if len(seq) < j_to:
        raise InvalidArgumentError(f"path has {len(seq)} entries, needs at least {j_to}")
    return [int(seq[j]) for j in range(j_from, j_to)]


def sigma_product(prop: SigmaPropagator, path, j_from: int, j_to: int) -> SigmaResult:
    """
    Ordered product M_{j_from}(x_{j_from}) ... M_{j_to - 1}(x_{j_to - 1}).

    ``path`` is a PathSample or a sequence of states indexed by node.
    Singular factors are reported through ``invertible``; the value is still returned.
    """
    _check_range(prop.grid, j_from, j_to)
    states = _path_states(path, j_from, j_to)
    out = np.eye(prop.k)
    invertible = True
    for j, x in zip(range(j_from, j_to), states):
        M = prop.factor(j, x)
        if np.linalg.cond(M) > SINGULAR_COND:
            invertible = False
        out = out @ M
    if not invertible:
        logger.warning("[Sigma] singular factor between nodes %d and %d", j_from, j_to)
    bound = norm_bound(prop.along(path, j_from, j_to), prop.grid.weights[j_from:j_to])
    return SigmaResult(out, bound, invertible, 0.0)


def sigma_product_inverse(prop: SigmaPropagator, path, j_from: int, j_to: int) -> np.ndarray:
    """Reverse-ordered product of the factor inverses."""
    states = _path_states(path, j_from, j_to)
    out = np.eye(prop.k)
    for j, x in zip(range(j_from, j_to), states):
        out = np.linalg.inv(prop.factor(j, x)) @ out
    return out


# =========================
# COMMUTING EXPONENTIAL
# =========================


def _check_commuting(mats: np.ndarray) -> None:
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            gap = mats[i] @ mats[j] - mats[j] @ mats[i]
            if np.max(np.abs(gap)) > COMMUTE_TOL:
                raise PreconditionError(f"b values {mats[i].tolist()} and {mats[j].tolist()} do not commute")


def commuting_exponential(
    b_field,
    grid: TimeGrid,
    j_from: int,
    j_to: int,
    k: int = 1,
    path: Optional[Sequence[int]] = None,
) -> SigmaResult:
    """
    exp(-sum_{j_from <= j < j_to} w_j b(t_j, x_j)) via scipy.linalg.expm.

    All values the field takes must commute pairwise. Without a path the field
    must not depend on the state.
    """
    _check_range(grid, j_from, j_to)
    b = matrix_field(b_field, k, name="b")
    if k > 1:
        _check_commuting(b.distinct_values())

    if path is None:
        raw = b.raw
        varies = (b.layout == "per_state" and not np.all(raw == raw[:1])) or (
            b.layout == "per_node_state" and not np.all(raw == raw[:, :1])
        )
        if varies:
            raise InvalidArgumentError("a state-dependent b needs a path")
        path = [0] * j_to
    states = _path_states(path, j_from, j_to)

    mats = np.stack([b.at(j, np.array([x]))[0] for j, x in zip(range(j_from, j_to), states)]) if j_to > j_from else np.zeros((0, k, k))
    integrated = np.tensordot(grid.weights[j_from:j_to], mats, axes=1) if len(mats) else np.zeros((k, k))
    value = scipy.linalg.expm(-integrated)
    return SigmaResult(value, norm_bound(mats, grid.weights[j_from:j_to]), True, 0.0)
