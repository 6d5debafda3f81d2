"""
Two-dimensional example with b = c(t, x) [[0, delta], [eps, 0]] and a = 0.

With I = sum_l w_l c(l, X_l) and s = sqrt(|delta eps|):

    delta eps > 0:  u1 = E[cosh(sI) g1] - (delta/s) E[sinh(sI) g2]
                    u2 = -(eps/s) E[sinh(sI) g1] + E[cosh(sI) g2]
    delta eps < 0:  the same with cos and sin.

The path expectations come from a backward recursion built on the
addition formulas, so no path enumeration is needed.
"""

from __future__ import annotations

import math

import numpy as np

from mie.errors import InvalidArgumentError
from mie.model.fields import scalar_field, terminal_array
from mie.model.markov import MarkovChainModel
from mie.model.timegrid import TimeGrid
from mie.solvers.results import SolutionField


def coshsinh_matrix(delta: float, eps: float) -> np.ndarray:
    return np.array([[0.0, delta], [eps, 0.0]])


def _even_odd_expectations(chain, grid, c, phi, s, hyperbolic):
    """E_{j,x}[C(s I_j) phi(X_N)] and E_{j,x}[S(s I_j) phi(X_N)] for all j."""
    N = chain.steps
    even = np.empty((N + 1,) + phi.shape)
    odd = np.empty((N + 1,) + phi.shape)
    even[N] = phi
    odd[N] = 0.0
    sign = 1.0 if hyperbolic else -1.0
    cfun, sfun = (np.cosh, np.sinh) if hyperbolic else (np.cos, np.sin)
    for j in range(N - 1, -1, -1):
        theta = (s * grid.weights[j] * c[j])[:, None]
        pe, po = chain.step(j, even[j + 1]), chain.step(j, odd[j + 1])
        even[j] = cfun(theta) * pe + sign * sfun(theta) * po
        odd[j] = sfun(theta) * pe + cfun(theta) * po
    return even, odd


def coshsinh_example(chain: MarkovChainModel, grid: TimeGrid, c_field, delta: float, eps: float, g1, g2) -> SolutionField:
    """Closed-form solution field (k = 2) of the cosh/sinh example."""
    if delta * eps == 0:
        raise InvalidArgumentError("delta and eps must both be nonzero")
    chain.check_grid(grid)
    S = chain.state_count
    c = scalar_field(c_field, name="c").full(chain.steps, S)
    phi = np.concatenate([terminal_array(g1, S, 1, "g1"), terminal_array(g2, S, 1, "g2")], axis=1)

    s = math.sqrt(abs(delta * eps))
    even, odd = _even_odd_expectations(chain, grid, c, phi, s, delta * eps > 0)

    u = np.empty_like(even)
    u[..., 0] = even[..., 0] - (delta / s) * odd[..., 1]
    u[..., 1] = -(eps / s) * odd[..., 0] + even[..., 1]
    return SolutionField(grid, u)


def coshsinh_b_field(c_field, delta: float, eps: float, steps: int, states: int) -> np.ndarray:
    """The matrix field c(t, x) [[0, delta], [eps, 0]] as shape (N, S, 2, 2)."""
    c = scalar_field(c_field, name="c").full(steps, states)
    return c[..., None, None] * coshsinh_matrix(delta, eps)
