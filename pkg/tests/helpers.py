import itertools

import numpy as np

from mie.model.markov import MarkovChainModel
from mie.model.timegrid import build_uniform


def random_chain(rng, steps, states):
    """Random time-inhomogeneous chain with strictly positive rows."""
    P = rng.random((steps, states, states)) + 0.05
    P /= P.sum(axis=2, keepdims=True)
    return MarkovChainModel(P)


def single_state(steps, T=1.0):
    return MarkovChainModel.identity(steps, 1), build_uniform(T, steps)


def enumerate_paths(chain, j_from, x):
    """Every path from (j_from, x) with its probability."""
    S = chain.state_count
    for tail in itertools.product(range(S), repeat=chain.steps - j_from):
        path = (x,) + tail
        prob = 1.0
        for i, j in enumerate(range(j_from, chain.steps)):
            prob *= chain.transitions[j, path[i], path[i + 1]]
        if prob > 0:
            yield path, prob


def riccati(g, T, t, sign):
    """Solution of u' = sign * u^2 with u(T) = g, i.e. the driver f(w) = sign * w^2."""
    return 1.0 / (1.0 / g + sign * (T - t))