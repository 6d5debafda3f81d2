"""Backward recursions for the right-hand sides of the inequality checks."""

from __future__ import annotations

import numpy as np

from mie.model.markov import MarkovChainModel
from mie.model.timegrid import TimeGrid


def exponential_bound(chain: MarkovChainModel, grid: TimeGrid, h, rate, increment) -> np.ndarray:
    """
    E_{j,x}[ exp(sum_{l>=j} w_l r_l) (h(X_N) + sum_{l>=j} c_l) ] for all nodes, shape (N + 1, S).

    Args:
        h: Terminal values, shape (S,).
        rate: r_l(x), shape (N, S).
        increment: c_l(x) in integrated units (already multiplied by w_l), shape (N, S).
    """
    N = chain.steps
    Y = np.empty((N + 1, chain.state_count))
    Z = np.ones(chain.state_count)
    Y[N] = h
    for j in range(N - 1, -1, -1):
        growth = np.exp(grid.weights[j] * rate[j])
        PZ = chain.step(j, Z)
        Y[j] = growth * (chain.step(j, Y[j + 1]) + increment[j] * PZ)
        Z = growth * PZ
    return Y


def gronwall_premise_rhs(chain: MarkovChainModel, grid: TimeGrid, v, h, a, b) -> np.ndarray:
    """R(j) = E_{j,x}[h(X_N)] + E_{j,x}[sum_{l>=j} w_l (a_l + b_l v(l + 1, X_{l+1}))]."""
    N = chain.steps
    R = np.empty((N + 1, chain.state_count))
    R[N] = h
    for j in range(N - 1, -1, -1):
        w = grid.weights[j]
        R[j] = chain.step(j, R[j + 1]) + w * (a[j] + b[j] * chain.step(j, v[j + 1]))
    return R


def gronwall_extremal(chain: MarkovChainModel, grid: TimeGrid, h, a, b) -> np.ndarray:
    """The field W with equality in the premise: W(j) = (1 + w b) P W(j + 1) + w a, W(N) = h."""
    N = chain.steps
    W = np.empty((N + 1, chain.state_count))
    W[N] = h
    for j in range(N - 1, -1, -1):
        w = grid.weights[j]
        W[j] = (1.0 + w * b[j]) * chain.step(j, W[j + 1]) + w * a[j]
    return W


def survival_factor(weights: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """c_j = prod_{l >= j} max(1 - w_l n_l, 0), shape (N + 1,); the grid form of exp(-sum w n)."""
    steps = np.maximum(1.0 - weights * rates, 0.0)
    out = np.ones(len(weights) + 1)
    for j in range(len(weights) - 1, -1, -1):
        out[j] = steps[j] * out[j + 1]
    return out
