"""
Backward recursions for the affine driver f(t, x, w) = a(t, x) + b(t, x) w.

All modes evaluate E[Sigma_{j,N} g(X_N)] - E[sum_l Sigma_{j,l} w_l a(l, X_l)]
with a different discrete Sigma:

    product      Sigma factors I - w b (identical to the explicit scheme)
    series       truncated alternating series of the product mode
    exp          per-step factors expm(-w b)
    mc           product factors along sampled paths
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg

from mie.errors import InvalidArgumentError
from mie.model.fields import matrix_field, terminal_array, vector_field
from mie.model.markov import MarkovChainModel, sample_state_matrix
from mie.model.timegrid import TimeGrid
from mie.solvers.results import SolutionField

logger = logging.getLogger(__name__)


def affine_arrays(chain: MarkovChainModel, grid: TimeGrid, a_field, b_field, g) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense a (N, S, k), b (N, S, k, k) and g (S, k); k is read off g."""
    chain.check_grid(grid)
    g = terminal_array(g, chain.state_count)
    k = g.shape[1]
    a = vector_field(a_field, k, name="a").full(chain.steps, chain.state_count)
    b = matrix_field(b_field, k, name="b").full(chain.steps, chain.state_count)
    return a, b, g


def _backward(chain, grid, a, factors, g) -> np.ndarray:
    N = chain.steps
    V = np.empty((N + 1,) + g.shape)
    V[N] = g
    for j in range(N - 1, -1, -1):
        PV = chain.step(j, V[j + 1])
        V[j] = np.einsum("sij,sj->si", factors[j], PV) - grid.weights[j] * a[j]
    return V


def linear_solve_backward(chain: MarkovChainModel, grid: TimeGrid, a_field, b_field, g) -> SolutionField:
    """V(N) = g; V(j, x) = (I - w_j b(j, x)) E_{j,x}[V(j + 1)] - w_j a(j, x)."""
    a, b, g = affine_arrays(chain, grid, a_field, b_field, g)
    k = g.shape[1]
    factors = np.eye(k) - grid.weights[:, None, None, None] * b
    return SolutionField(grid, _backward(chain, grid, a, factors, g))


def exponential_solve_backward(chain: MarkovChainModel, grid: TimeGrid, a_field, b_field, g) -> SolutionField:
    """V(j, x) = expm(-w_j b(j, x)) E_{j,x}[V(j + 1)] - w_j a(j, x)."""
    a, b, g = affine_arrays(chain, grid, a_field, b_field, g)
    factors = scipy.linalg.expm(-grid.weights[:, None, None, None] * b)
    return SolutionField(grid, _backward(chain, grid, a, factors, g))


def scalar_fk(chain: MarkovChainModel, grid: TimeGrid, a_field, b_field, g) -> SolutionField:
    """k = 1 representation with exact per-step factors e^{-w_j b(j, x)}."""
    g = terminal_array(g, chain.state_count)
    if g.shape[1] != 1:
        raise InvalidArgumentError(f"scalar_fk needs k = 1, got k = {g.shape[1]}")
    a, b, g = affine_arrays(chain, grid, a_field, b_field, g)
    factors = np.exp(-grid.weights[:, None, None, None] * b)
    return SolutionField(grid, _backward(chain, grid, a, factors, g))


def series_solve_backward(chain: MarkovChainModel, grid: TimeGrid, a_field, b_field, g, order: int) -> SolutionField:
    """
    Truncated alternating series sum_{n <= order} (-1)^n D_n with

        D_0(j) = P_j D_0(j + 1) - w_j a_j,             D_0(N) = g
        D_n(j) = w_j b_j P_j D_{n-1}(j + 1) + P_j D_n(j + 1),  D_n(N) = 0

    Equal to the product mode once order >= N.
    """
    if order < 0:
        raise InvalidArgumentError(f"order must be nonnegative, got {order}")
    a, b, g = affine_arrays(chain, grid, a_field, b_field, g)
    N = chain.steps

    D = np.empty((N + 1,) + g.shape)
    D[N] = g
    for j in range(N - 1, -1, -1):
        D[j] = chain.step(j, D[j + 1]) - grid.weights[j] * a[j]
    total = D.copy()

    for n in range(1, order + 1):
        nxt = np.zeros_like(D)
        for j in range(N - 1, -1, -1):
            drive = np.einsum("sij,sj->si", b[j], chain.step(j, D[j + 1]))
            nxt[j] = grid.weights[j] * drive + chain.step(j, nxt[j + 1])
        D = nxt
        total += (-1.0) ** n * D
        if not np.any(D):
            logger.debug("[Series] terms vanish from order %d", n)
            break
    return SolutionField(grid, total)


@dataclass
class MonteCarloEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    count: int
    seed: int


def monte_carlo_fk(
    chain: MarkovChainModel,
    grid: TimeGrid,
    a_field,
    b_field,
    g,
    count: int,
    seed: int,
    j_from: int = 0,
) -> MonteCarloEstimate:
    """
    Product-mode representation at node j_from estimated from sampled paths.

    Paths from state x use the seed sequence (seed, x). Returns per-state means
    and standard errors, shape (S, k).
    """
    a, b, g = affine_arrays(chain, grid, a_field, b_field, g)
    S, k, N = chain.state_count, g.shape[1], chain.steps
    mean = np.empty((S, k))
    stderr = np.empty((S, k))

    for x in range(S):
        paths = sample_state_matrix(chain, j_from, x, count, [seed, x])
        V = g[paths[:, -1]]
        for l in range(N - 1, j_from - 1, -1):
            X = paths[:, l - j_from]
            w = grid.weights[l]
            V = V - w * np.einsum("pij,pj->pi", b[l, X], V) - w * a[l, X]
        mean[x] = V.mean(axis=0)
        stderr[x] = V.std(axis=0, ddof=1) / np.sqrt(count) if count > 1 else 0.0

    logger.info("[MonteCarlo] %d paths per state from node %d", count, j_from)
    return MonteCarloEstimate(mean, stderr, count, seed)
