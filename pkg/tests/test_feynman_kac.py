import numpy as np
import pytest
import scipy.linalg

from mie.errors import InvalidArgumentError, PreconditionError
from mie.feynman_kac.coshsinh import coshsinh_b_field, coshsinh_example
from mie.feynman_kac.linear import (
    exponential_solve_backward,
    linear_solve_backward,
    monte_carlo_fk,
    scalar_fk,
    series_solve_backward,
)
from mie.feynman_kac.sigma import (
    SigmaPropagator,
    commuting_exponential,
    sigma_product,
    sigma_product_inverse,
    sigma_series,
)
from mie.model.markov import MarkovChainModel
from mie.model.timegrid import build_uniform
from tests.helpers import enumerate_paths, random_chain, single_state


def _instance(rng, steps, states, k):
    """Random chain, grid and per-(node, state) coefficients; k = 1 data is scalar-valued."""
    chain = random_chain(rng, steps, states)
    grid = build_uniform(1.0, steps)
    a = rng.normal(size=(steps, states, k))
    b = rng.normal(size=(steps, states, k, k))
    g = rng.normal(size=(states, k))
    if k == 1:
        return chain, grid, a[..., 0], b[..., 0, 0], g
    return chain, grid, a, b, g


def _dense(a, b, k):
    if k == 1:
        return a[..., None], b[..., None, None]
    return a, b


# =========================
# PRODUCT MODE
# =========================


@pytest.mark.parametrize("steps, states, k", [(1, 1, 1), (3, 2, 1), (4, 3, 2), (5, 2, 3), (2, 3, 3)])
def test_backward_recursion_matches_path_enumeration(rng, steps, states, k):
    chain, grid, a, b, g = _instance(rng, steps, states, k)
    A, B = _dense(a, b, k)
    V = linear_solve_backward(chain, grid, a, b, g).values[0]

    for x in range(states):
        expected = np.zeros(k)
        for path, prob in enumerate_paths(chain, 0, x):
            acc = g[path[-1]].copy()
            for l in range(steps - 1, -1, -1):
                w = grid.weights[l]
                acc = acc - w * B[l, path[l]] @ acc - w * A[l, path[l]]
            expected += prob * acc
        np.testing.assert_allclose(V[x], expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("steps, states, k", [(3, 2, 2), (4, 3, 1)])
def test_sigma_product_reproduces_the_representation(rng, steps, states, k):
    chain, grid, a, b, g = _instance(rng, steps, states, k)
    A, _ = _dense(a, b, k)
    prop = SigmaPropagator(grid, b, k)
    V = linear_solve_backward(chain, grid, a, b, g).values[0]

    for x in range(states):
        expected = np.zeros(k)
        for path, prob in enumerate_paths(chain, 0, x):
            value = sigma_product(prop, path, 0, steps).matrix @ g[path[-1]]
            for l in range(steps):
                value -= sigma_product(prop, path, 0, l).matrix @ (grid.weights[l] * A[l, path[l]])
            expected += prob * value
        np.testing.assert_allclose(V[x], expected, rtol=1e-12, atol=1e-12)


# =========================
# SERIES AND EXPONENTIAL MODES
# =========================


@pytest.mark.parametrize("k", [1, 2])
def test_series_of_full_order_equals_product(rng, k):
    chain, grid, a, b, g = _instance(rng, 5, 3, k)
    product = linear_solve_backward(chain, grid, a, b, g).values
    for order in (5, 8):
        series = series_solve_backward(chain, grid, a, b, g, order).values
        np.testing.assert_allclose(series, product, rtol=1e-12, atol=1e-12)


def test_series_of_order_zero_drops_b(rng):
    chain, grid, a, b, g = _instance(rng, 4, 2, 2)
    series = series_solve_backward(chain, grid, a, b, g, 0).values
    without_b = linear_solve_backward(chain, grid, a, np.zeros((2, 2)), g).values
    np.testing.assert_allclose(series, without_b, rtol=1e-12, atol=1e-12)


def test_series_rejects_negative_order(rng):
    chain, grid, a, b, g = _instance(rng, 2, 2, 1)
    with pytest.raises(InvalidArgumentError):
        series_solve_backward(chain, grid, a, b, g, -1)


def test_exponential_mode_is_exact_for_constant_scalar_b():
    chain, grid = single_state(400)
    exact = exponential_solve_backward(chain, grid, 0.0, 1.0, [1.0]).values[0, 0, 0]
    product = linear_solve_backward(chain, grid, 0.0, 1.0, [1.0]).values[0, 0, 0]
    assert exact == pytest.approx(np.exp(-1.0), rel=1e-12)
    assert abs(product - np.exp(-1.0)) < 1.0 / 400


def test_scalar_fk_equals_exponential_mode(rng):
    chain, grid, a, b, g = _instance(rng, 6, 3, 1)
    np.testing.assert_allclose(
        scalar_fk(chain, grid, a, b, g).values,
        exponential_solve_backward(chain, grid, a, b, g).values,
        rtol=1e-13,
        atol=1e-13,
    )


def test_scalar_fk_needs_one_dimension(rng):
    chain, grid, a, b, g = _instance(rng, 3, 2, 2)
    with pytest.raises(InvalidArgumentError):
        scalar_fk(chain, grid, a, b, g)


# =========================
# MONTE CARLO
# =========================


@pytest.mark.parametrize("j_from", [0, 2])
def test_monte_carlo_agrees_within_five_standard_errors(rng, j_from):
    chain, grid, a, b, g = _instance(rng, 4, 3, 2)
    exact = linear_solve_backward(chain, grid, a, b, g).values[j_from]
    est = monte_carlo_fk(chain, grid, a, b, g, count=4000, seed=7, j_from=j_from)

    assert est.mean.shape == (3, 2)
    assert np.all(est.stderr > 0)
    assert np.all(np.abs(est.mean - exact) <= 5.0 * est.stderr)


def test_monte_carlo_is_deterministic_per_seed(rng):
    chain, grid, a, b, g = _instance(rng, 3, 2, 1)
    first = monte_carlo_fk(chain, grid, a, b, g, count=50, seed=3)
    again = monte_carlo_fk(chain, grid, a, b, g, count=50, seed=3)
    other = monte_carlo_fk(chain, grid, a, b, g, count=50, seed=4)
    np.testing.assert_array_equal(first.mean, again.mean)
    assert not np.array_equal(first.mean, other.mean)


def test_monte_carlo_on_a_deterministic_chain_has_no_spread():
    N = 5
    chain = MarkovChainModel.identity(N, 2)
    grid = build_uniform(1.0, N)
    est = monte_carlo_fk(chain, grid, 0.5, 1.0, [1.0, 2.0], count=10, seed=0)
    exact = linear_solve_backward(chain, grid, 0.5, 1.0, [1.0, 2.0]).values[0]
    np.testing.assert_allclose(est.mean, exact, rtol=1e-12)
    np.testing.assert_allclose(est.stderr, 0.0, atol=1e-14)


# =========================
# SIGMA
# =========================


def _random_path(rng, steps, states):
    return [int(x) for x in rng.integers(0, states, size=steps + 1)]


@pytest.mark.parametrize("k", [1, 3])
def test_sigma_product_algebra(rng, k):
    N, S = 8, 3
    grid = build_uniform(1.0, N)
    b = rng.normal(size=(N, S)) if k == 1 else rng.normal(size=(N, S, k, k))
    prop = SigmaPropagator(grid, b, k)
    path = _random_path(rng, N, S)

    np.testing.assert_array_equal(sigma_product(prop, path, 3, 3).matrix, np.eye(k))

    whole = sigma_product(prop, path, 0, N)
    left = sigma_product(prop, path, 0, 5).matrix
    right = sigma_product(prop, path, 5, N).matrix
    np.testing.assert_allclose(whole.matrix, left @ right, atol=1e-10)
    np.testing.assert_allclose(whole.matrix @ sigma_product_inverse(prop, path, 0, N), np.eye(k), atol=1e-10)
    assert whole.invertible
    assert np.linalg.norm(whole.matrix) <= whole.norm_bound


def test_singular_factor_is_reported():
    grid = build_uniform(1.0, 4)
    prop = SigmaPropagator(grid, 4.0)
    result = sigma_product(prop, [0] * 5, 0, 4)
    assert not result.invertible
    assert result.matrix[0, 0] == 0.0


def test_sigma_series_converges_to_the_product(rng):
    N, S, k = 6, 2, 2
    grid = build_uniform(1.0, N)
    b = rng.normal(size=(N, S, k, k))
    prop = SigmaPropagator(grid, b, k)
    path = _random_path(rng, N, S)
    along = prop.along(path, 0, N)
    product = sigma_product(prop, path, 1, N).matrix

    full = sigma_series(along, grid, 1, N, order=N)
    np.testing.assert_allclose(full.matrix, product, atol=1e-12)
    for order in (0, 1, 2, 3):
        partial = sigma_series(along, grid, 1, N, order)
        assert np.linalg.norm(partial.matrix - product) <= partial.tail_bound + 1e-12


def test_sigma_series_on_an_empty_range_is_the_identity():
    grid = build_uniform(1.0, 4)
    result = sigma_series(np.eye(2), grid, 2, 2, order=3)
    np.testing.assert_array_equal(result.matrix, np.eye(2))
    assert result.tail_bound == 0.0


def test_sigma_series_terms_stay_within_their_bound(rng, caplog):
    N, k = 8, 3
    grid = build_uniform(2.0, N)
    b = 3.0 * rng.normal(size=(N, k, k))
    with caplog.at_level("WARNING", logger="mie.feynman_kac.sigma"):
        sigma_series(b, grid, 0, N, order=N)
    assert "exceeds its norm bound" not in caplog.text

    b[4, 0, 1] = np.nan
    with pytest.raises(InvalidArgumentError):
        sigma_series(b, grid, 0, N, order=2)


def test_commuting_exponential_constant_matrix():
    grid = build_uniform(2.0, 10)
    B = np.array([[0.3, -1.0], [2.0, 0.5]])
    result = commuting_exponential(B, grid, 0, 10, k=2)
    np.testing.assert_allclose(result.matrix, scipy.linalg.expm(-2.0 * B), rtol=1e-12)


def test_commuting_exponential_along_a_path():
    grid = build_uniform(1.0, 4)
    b = np.array([1.0, 3.0])
    path = [0, 1, 1, 0, 1]
    result = commuting_exponential(b, grid, 0, 4, path=path)
    assert result.matrix[0, 0] == pytest.approx(np.exp(-0.25 * (1 + 3 + 3 + 1)), rel=1e-12)


def test_commuting_exponential_preconditions():
    grid = build_uniform(1.0, 4)
    with pytest.raises(InvalidArgumentError):
        commuting_exponential(np.array([1.0, 3.0]), grid, 0, 4)

    non_commuting = np.array([[[0.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]])
    with pytest.raises(PreconditionError):
        commuting_exponential(non_commuting, grid, 0, 4, k=2, path=[0, 1, 0, 1, 0])


def test_sigma_range_is_validated():
    grid = build_uniform(1.0, 4)
    with pytest.raises(InvalidArgumentError):
        sigma_product(SigmaPropagator(grid, 1.0), [0] * 5, 3, 1)


# =========================
# COSH / SINH EXAMPLE
# =========================


@pytest.mark.parametrize(
    "eps, expected",
    [(1.0, (np.cosh(1.0), -np.sinh(1.0))), (-1.0, (np.cos(1.0), np.sin(1.0)))],
)
def test_coshsinh_constant_rate(eps, expected):
    N = 4000
    chain, grid = single_state(N)
    closed = coshsinh_example(chain, grid, 1.0, 1.0, eps, [1.0], [0.0]).values[0, 0]
    np.testing.assert_allclose(closed, expected, rtol=1e-12)

    b = coshsinh_b_field(1.0, 1.0, eps, N, 1)
    recursion = linear_solve_backward(chain, grid, np.zeros(2), b, [[1.0, 0.0]]).values[0, 0]
    np.testing.assert_allclose(recursion, expected, atol=1e-3)


@pytest.mark.parametrize("delta, eps", [(2.0, 0.5), (1.5, -0.7)])
def test_coshsinh_matches_exponential_mode_on_a_random_chain(rng, delta, eps):
    N, S = 6, 3
    chain = random_chain(rng, N, S)
    grid = build_uniform(1.0, N)
    c = rng.random((N, S))
    g1, g2 = rng.normal(size=S), rng.normal(size=S)

    closed = coshsinh_example(chain, grid, c, delta, eps, g1, g2).values
    b = coshsinh_b_field(c, delta, eps, N, S)
    exact = exponential_solve_backward(chain, grid, np.zeros(2), b, np.stack([g1, g2], axis=1)).values
    np.testing.assert_allclose(closed, exact, rtol=1e-11, atol=1e-12)


def test_coshsinh_needs_nonzero_coupling():
    chain, grid = single_state(4)
    with pytest.raises(InvalidArgumentError):
        coshsinh_example(chain, grid, 1.0, 0.0, 1.0, [1.0], [0.0])
