import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mie.errors import InvalidArgumentError, PreconditionError
from mie.model.fields import Domain
from mie.model.generator import make_affine, make_power
from mie.model.markov import MarkovChainModel
from mie.model.timegrid import build_uniform
from mie.solvers.global_1d import check_endpoint_signs, clip_terminal, levels_decrease, solve_1d_global
from mie.solvers.picard import picard_solve
from mie.solvers.results import SolverOptions
from tests.helpers import single_state

UNIT = Domain.box([0.0], [1.0], lower_closed=True, upper_closed=True)
HALF_LINE = Domain.box([0.0], [np.inf], lower_closed=True)


def _opts(**kwargs):
    kwargs.setdefault("tol", 1e-13)
    return SolverOptions(**kwargs)


def test_logistic_matches_ode():
    chain, grid = single_state(4000)
    gen = make_power([(1.0, 1.0), (-1.0, 2.0)], domain=UNIT)
    field, report = solve_1d_global(chain, grid, gen, [0.5], opts=_opts())

    ode = solve_ivp(lambda t, y: y * (1.0 - y), (1.0, 0.0), [0.5], rtol=1e-11, atol=1e-13)
    assert abs(ode.y[0, -1] - 1.0 / (1.0 + np.e)) < 1e-8
    assert abs(field.values[0, 0, 0] - ode.y[0, -1]) < 2e-3
    assert np.all((field.values >= 0.0) & (field.values <= 1.0))
    assert report.converged


def test_terminal_away_from_the_ends_needs_one_extra_level():
    chain, grid = single_state(200)
    gen = make_power([(1.0, 1.0), (-1.0, 2.0)], domain=UNIT)
    _, report = solve_1d_global(chain, grid, gen, [0.5], opts=_opts())
    assert report.level_differences == [0.0]


def test_half_line_square_driver():
    # u' = u^2 with u(1) = 1 gives u(0) = 1/2
    chain, grid = single_state(4000)
    gen = make_power([(1.0, 2.0)], domain=HALF_LINE)
    field, report = solve_1d_global(chain, grid, gen, [1.0], opts=_opts())
    assert abs(field.values[0, 0, 0] - 0.5) < 2e-3
    assert all(d < 1e-8 for d in report.level_differences)


def test_level_differences_shrink_for_data_on_the_endpoint():
    N = 200
    chain = MarkovChainModel.uniform(N, 2)
    grid = build_uniform(1.0, N)
    gen = make_power([(1.0, 2.0)], domain=HALF_LINE)
    field, report = solve_1d_global(chain, grid, gen, [0.0, 1.0], clip_depth=20, opts=_opts())

    diffs = report.level_differences
    assert len(diffs) == 19
    assert all(b <= a + 1e-12 for a, b in zip(diffs, diffs[1:]))
    assert report.levels_decreasing
    assert diffs[-1] < 1e-5
    assert np.all(field.values > 0.0)


def test_whole_line_runs_plain_picard():
    chain, grid = single_state(300)
    gen = make_power([(-1.0, 2.0)])
    field, report = solve_1d_global(chain, grid, gen, [0.5], opts=_opts())
    direct, _ = picard_solve(chain, grid, gen, [0.5], _opts())
    np.testing.assert_array_equal(field.values, direct.values)
    assert report.level_differences == []


def test_exploding_level_falls_back_to_the_monitor():
    chain, grid = single_state(4000)
    gen = make_power([(-1.0, 2.0)], domain=HALF_LINE)
    field, report = solve_1d_global(chain, grid, gen, [2.0], opts=_opts())

    assert report.blowup is not None
    assert report.blowup.trigger == "growth"
    assert abs(report.blowup.t_minus_estimate - 0.5) < 0.01
    assert field.start_index == report.blowup.halt_index
    assert report.level_differences == []


def test_wrong_endpoint_sign_is_rejected():
    chain, grid = single_state(10)
    gen = make_power([(1.0, 0.0)], domain=UNIT)
    with pytest.raises(PreconditionError):
        solve_1d_global(chain, grid, gen, [0.5])
    with pytest.raises(PreconditionError):
        check_endpoint_signs(make_power([(-1.0, 0.0)], domain=UNIT), 10, 1, 1e-12)


def test_terminal_outside_the_interval_is_rejected():
    chain, grid = single_state(10)
    gen = make_power([(1.0, 1.0), (-1.0, 2.0)], domain=UNIT)
    with pytest.raises(PreconditionError):
        solve_1d_global(chain, grid, gen, [1.5])


def test_needs_one_dimension():
    chain, grid = single_state(10)
    gen = make_affine(np.zeros(2), np.zeros((2, 2)), k=2)
    with pytest.raises(InvalidArgumentError):
        solve_1d_global(chain, grid, gen, [[0.0, 0.0]])


def test_clip_depth_must_be_positive():
    chain, grid = single_state(10)
    with pytest.raises(InvalidArgumentError):
        solve_1d_global(chain, grid, make_power([(1.0, 2.0)], domain=HALF_LINE), [1.0], clip_depth=0)


def test_clip_terminal():
    g = np.array([[0.0], [0.5], [1.0]])
    np.testing.assert_allclose(clip_terminal(g, 0.0, 1.0, 2), [[0.25], [0.5], [0.75]])
    np.testing.assert_allclose(clip_terminal(g, 0.0, np.inf, 3), [[0.125], [0.5], [1.0]])
    np.testing.assert_allclose(clip_terminal(g, -np.inf, 1.0, 1), [[0.0], [0.5], [0.5]])
    assert clip_terminal(g, -np.inf, np.inf, 5) is g


def test_levels_decrease():
    assert levels_decrease([], 0.0)
    assert levels_decrease([0.5, 0.25, 0.25], 0.0)
    assert not levels_decrease([0.5, 0.25, 0.3], 1e-3)
    assert levels_decrease([0.5, 0.25, 0.2501], 1e-3)
