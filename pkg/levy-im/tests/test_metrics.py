import numpy as np
import pytest

from core.errors import ContractViolation, RangeError
from core.manifold import HistoryFn, ManifoldGraph, lp_solve
from core.metrics import j1_distance_upper, uniform_distance, weighted_history_norm
from core.noise import CadlagPath


def step(at, lo=0.0, hi=1.0, height=1.0):
    return CadlagPath(np.array([lo, at, hi]), np.array([0.0, height, height]), "constant")


def random_step_path(rng, jumps=4):
    inner = np.sort(rng.uniform(0.05, 0.95, jumps))
    times = np.concatenate([[0.0], inner, [1.0]])
    values = np.concatenate([[0.0], np.cumsum(rng.normal(size=jumps)), [0.0]])
    values[-1] = values[-2]
    return CadlagPath(times, values, "constant")


def test_identical_paths_are_at_distance_zero():
    p = step(0.3)
    assert uniform_distance(p, p, 1.0) == 0.0
    assert j1_distance_upper(p, p, 1.0).d_j1_upper == 0.0


def test_shifted_step():
    report = j1_distance_upper(step(0.5), step(0.51), (0.0, 1.0))
    assert report.d_uniform == pytest.approx(1.0)
    assert report.d_j1_upper <= 0.0205
    assert report.d_j1_upper == pytest.approx(abs(np.log(0.98)), rel=1e-9)
    assert report.lambda_used.startswith("piecewise-linear")
    assert report.knots[1] == pytest.approx([0.5, 0.51])


def test_j1_never_exceeds_uniform(rng):
    for _ in range(100):
        p1, p2 = random_step_path(rng), random_step_path(rng)
        report = j1_distance_upper(p1, p2, 1.0)
        assert report.d_j1_upper <= report.d_uniform


def test_window_outside_horizon():
    with pytest.raises(RangeError):
        uniform_distance(step(0.5), step(0.5), (0.0, 2.0))
    with pytest.raises(RangeError):
        uniform_distance(step(0.5), step(0.5), (0.5, 0.5))


def test_budget_is_reported(rng):
    p1, p2 = random_step_path(rng, jumps=8), random_step_path(rng, jumps=8)
    report = j1_distance_upper(p1, p2, 1.0, budget=5)
    assert report.budget_exhausted
    assert report.candidates_tried == 5


def test_weighted_history_norm_matches_the_solver(spec_n2, saturating, make_scenario):
    graph = ManifoldGraph(make_scenario(1.5, 9), spec_n2, saturating)
    history = lp_solve(graph, np.array([0.5, 0.5]))
    assert weighted_history_norm(history) == pytest.approx(graph.weighted_norm(history.states))
    # a larger beta only discounts the past more
    assert weighted_history_norm(history, beta=history.beta + 1.0) <= weighted_history_norm(history)


def test_weighted_history_norm_needs_weights(spec_n2):
    grid = np.linspace(-1.0, 0.0, 5)
    history = HistoryFn(grid, np.ones((5, 8)), 1.0, None, spec_n2)
    with pytest.raises(ContractViolation):
        weighted_history_norm(history)


def test_uniform_distance_triangle_inequality(rng):
    for _ in range(100):
        a, b, c = (random_step_path(rng) for _ in range(3))
        assert uniform_distance(a, c, 1.0) <= uniform_distance(a, b, 1.0) + uniform_distance(b, c, 1.0) + 1e-15


def test_j1_bound_never_grows_with_budget(rng):
    for _ in range(10):
        p1, p2 = random_step_path(rng, jumps=5), random_step_path(rng, jumps=5)
        values = [j1_distance_upper(p1, p2, 1.0, budget=b).d_j1_upper for b in (1, 2, 5, 20, 100, 1000)]
        assert np.all(np.diff(values) <= 0)


def test_weighted_history_norm_is_a_norm(spec_sigma, rng):
    grid = np.linspace(-3.0, 0.0, 31)
    weights = np.cumsum(rng.normal(scale=0.1, size=31))
    weights -= weights[-1]

    def history(states):
        return HistoryFn(grid, states, 2.5, weights, spec_sigma)

    zero = history(np.zeros((31, 8)))
    assert weighted_history_norm(zero) == 0.0
    for _ in range(20):
        a, b = rng.normal(size=(2, 31, 8))
        c = float(rng.uniform(-3.0, 3.0))
        assert weighted_history_norm(history(c * a)) == pytest.approx(abs(c) * weighted_history_norm(history(a)))
        assert weighted_history_norm(history(a + b)) <= (
            weighted_history_norm(history(a)) + weighted_history_norm(history(b))) * (1 + 1e-14)


def test_weighted_history_norm_of_constant_mode(spec_sigma):
    grid = np.linspace(-5.0, 0.0, 51)
    states = np.zeros((51, 8))
    states[:, 3] = -1.5
    history = HistoryFn(grid, states, 2.0, np.zeros(51), spec_sigma)
    # lambda_4^sigma |c| = 16^0.25 * 1.5, attained at s = 0
    assert weighted_history_norm(history) == pytest.approx(3.0)
