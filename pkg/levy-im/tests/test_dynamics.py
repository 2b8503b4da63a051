from functools import partial

import numpy as np
import pytest

from core.dynamics import (
    apriori_envelope,
    coupled_solution_errors,
    Trajectory,
    integrate,
    solution_convergence,
    solve_original,
    to_conjugated,
    to_original,
)
from core.config import sim_config
from core.errors import ContractViolation, DivergenceError, DomainError
from core.noise import build_scenario
from core.nonlinearity import build_nonlinearity
from core.ou import scenario_ou
from core.spectral import Spectrum, apriori_bound
from utils.pool import fan_out

DT = 2.0 ** -10


def test_linear_flow_is_exact_without_noise(spec_n2, quiet_scenario):
    zero = build_nonlinearity("zero", spec_n2)
    x = np.linspace(1.0, 0.3, 8)
    traj = integrate(quiet_scenario, spec_n2, zero, x, 1.0, DT)
    expected = np.exp(-np.outer(traj.times, spec_n2.lambdas)) * x
    np.testing.assert_allclose(traj.states, expected, rtol=1e-12)


def test_linear_perturbation_first_order(spec_n2, quiet_scenario):
    nl = build_nonlinearity("linear-diagonal", spec_n2, eps=0.5)
    x = np.ones(8)
    traj = integrate(quiet_scenario, spec_n2, nl, x, 1.0, 1e-3)
    expected = np.exp((0.5 - spec_n2.lambdas) * 1.0) * x
    np.testing.assert_allclose(traj.states[-1], expected, rtol=1e-2, atol=1e-6)


def test_divergence_reports_step(spec_n2, quiet_scenario):
    nl = build_nonlinearity("linear-diagonal", spec_n2, eps=1000.0)
    with pytest.raises(DivergenceError) as err:
        integrate(quiet_scenario, spec_n2, nl, np.ones(8), 1.0, 1e-3)
    assert 0 < err.value.step <= 1000
    assert err.value.details["step"] == err.value.step


def test_integrate_validates_arguments(spec_n2, saturating, quiet_scenario):
    with pytest.raises(DomainError):
        integrate(quiet_scenario, spec_n2, saturating, np.ones(8), 1.0, 0.0)
    with pytest.raises(DomainError):
        integrate(quiet_scenario, spec_n2, saturating, np.ones(3), 1.0, DT)


def test_cocycle_property(spec_n2, saturating, make_scenario):
    scenario = make_scenario(1.6, 4)
    ou = scenario_ou(scenario)
    x = np.linspace(0.5, -0.5, 8)
    whole = integrate(scenario, spec_n2, saturating, x, 1.0, DT, ou=ou)
    first = integrate(scenario, spec_n2, saturating, x, 0.5, DT, ou=ou)
    second = integrate(scenario, spec_n2, saturating, first.states[-1], 0.5, DT, offset=0.5, ou=ou)
    np.testing.assert_allclose(second.states[-1], whole.states[-1], rtol=1e-12, atol=1e-14)


def test_conjugation_round_trip(spec_n2, saturating, make_scenario):
    scenario = make_scenario(1.5, 7)
    traj = integrate(scenario, spec_n2, saturating, np.ones(8), 0.5, DT)
    original = to_original(traj)
    assert original.frame == "original"
    back = to_conjugated(original)
    np.testing.assert_allclose(back.states, traj.states, rtol=1e-13)
    with pytest.raises(ContractViolation):
        to_conjugated(traj)
    with pytest.raises(ContractViolation):
        to_original(original)


def test_original_solution_starts_at_x(spec_n2, saturating, make_scenario):
    scenario = make_scenario(1.8, 2)
    x = np.linspace(1.0, 2.0, 8)
    traj = solve_original(scenario, spec_n2, saturating, x, 0.25, DT)
    np.testing.assert_allclose(traj.states[0], x, rtol=1e-14)


def test_trajectory_tables(spec_n2, saturating, quiet_scenario):
    traj = integrate(quiet_scenario, spec_n2, saturating, np.ones(8), 4 * DT, DT)
    long = traj.long_frame()
    assert list(long.columns) == ["t", "k", "coeff"]
    assert len(long) == 5 * 8
    assert list(traj.norm_frame(spec_n2).columns) == ["t", "norm_sigma"]


def test_apriori_envelope_holds(spec_sigma, make_scenario):
    nl = build_nonlinearity("saturating", spec_sigma, eps=0.5)
    traj = integrate(make_scenario(1.5, 3), spec_sigma, nl, np.full(8, 0.5), 1.0, DT)
    envelope = apriori_envelope(traj, spec_sigma, nl.lipschitz)
    assert np.all(envelope["norm_sigma"] <= envelope["bound"] * (1 + 1e-12))
    with pytest.raises(ContractViolation):
        apriori_envelope(to_original(traj), spec_sigma, nl.lipschitz)


def test_solution_convergence_schema(spec_n2, saturating):
    table = solution_convergence([1.5, 2.0], spec_n2, saturating, np.ones(8), 0.25, 2,
                                 dt=DT, mesh=2.0 ** -8)
    assert list(table.columns) == ["frame", "alpha", "median_sup_error", "frac_below_eps", "eps", "n"]
    brownian = table[table["alpha"] == 2.0]
    assert len(brownian) == 2
    assert np.all(brownian["median_sup_error"] == 0.0)
    assert np.all(table.loc[table["alpha"] == 1.5, "median_sup_error"] > 0.0)


@pytest.mark.slow
def test_solution_convergence_trend(spec_n2, saturating):
    table = solution_convergence([1.5, 1.9, 1.99, 2.0], spec_n2, saturating, np.ones(8), 1.0, 100,
                                 runner=partial(fan_out, threads=4))
    for frame in ("conjugated", "original"):
        rows = table[table["frame"] == frame]
        medians = rows.loc[rows["alpha"] < 2.0, "median_sup_error"].to_numpy()
        assert np.all(np.diff(medians) < 0)
        assert rows.loc[rows["alpha"] == 2.0, "median_sup_error"].item() == 0.0


@pytest.fixture
def scalar_spec():
    return Spectrum(np.array([2.0]), 1)


def _scalar_linear(ou, lam, x, T, dt, original=False):
    """x exp(-lam t + dt sum_(m<n) z_m), the exponential Euler product for F = 0 and K = 1"""
    times = np.arange(int(round(T / dt)) + 1) * dt
    z = np.asarray(ou(times))
    riemann = np.concatenate([[0.0], np.cumsum(z[:-1]) * dt])
    u = x * np.exp(-lam * times + riemann)
    if original:
        return np.exp(z - z[0]) * u
    return u


def test_scalar_linear_flow_matches_noisy_closed_form(scalar_spec, make_scenario):
    scenario = make_scenario(1.6, 3)
    ou = scenario_ou(scenario)
    zero = build_nonlinearity("zero", scalar_spec)
    traj = integrate(scenario, scalar_spec, zero, np.array([1.5]), 1.0, DT, ou=ou)
    Z = np.asarray(ou.integral(traj.times)) - float(ou.integral(0.0))
    closed = 1.5 * np.exp(-2.0 * traj.times + Z)
    np.testing.assert_allclose(traj.states[:, 0], closed, rtol=10 * DT)
    np.testing.assert_allclose(traj.states[:, 0], _scalar_linear(ou, 2.0, 1.5, 1.0, DT), rtol=1e-12)


def test_scalar_convergence_errors_match_ou_only_evaluation(scalar_spec):
    zero = build_nonlinearity("zero", scalar_spec)
    x, T, dt, mesh = np.array([0.7]), 0.5, DT, 2.0 ** -8
    errors = coupled_solution_errors(1.7, 11, scalar_spec, zero, x, T, dt, mesh)

    tail = sim_config.ou_min_tail
    scenario = build_scenario(1.7, 11, horizon=(tail + 1.0, T + 1.0), mesh=mesh)
    ou_a, ou_2 = scenario_ou(scenario, tail), scenario_ou(scenario.brownian_twin(), tail)
    conj = np.max(np.abs(_scalar_linear(ou_a, 2.0, 0.7, T, dt) - _scalar_linear(ou_2, 2.0, 0.7, T, dt)))
    orig = np.max(np.abs(_scalar_linear(ou_a, 2.0, 0.7, T, dt, original=True)
                         - _scalar_linear(ou_2, 2.0, 0.7, T, dt, original=True)))
    assert errors["conjugated"] == pytest.approx(conj, abs=1e-8)
    assert errors["original"] == pytest.approx(orig, abs=1e-8)
    assert errors["conjugated"] > 0.0


def test_scalar_solution_convergence_runs(scalar_spec):
    zero = build_nonlinearity("zero", scalar_spec)
    table = solution_convergence([1.8, 2.0], scalar_spec, zero, np.array([1.0]), 0.25, 2, dt=DT, mesh=2.0 ** -8)
    assert np.all(table.loc[table["alpha"] == 2.0, "median_sup_error"] == 0.0)
    assert np.all(np.isfinite(table["median_sup_error"]))


def test_lipschitz_dependence_on_initial_data(spec_n2, saturating, make_scenario, rng):
    scenario = make_scenario(1.5, 9)
    ou = scenario_ou(scenario)
    T = 0.5
    lam1, L = float(spec_n2.lambdas[0]), saturating.lipschitz
    for _ in range(10):
        x1, x2 = rng.normal(size=(2, 8))
        a = integrate(scenario, spec_n2, saturating, x1, T, DT, ou=ou)
        b = integrate(scenario, spec_n2, saturating, x2, T, DT, ou=ou)
        gap = spec_n2.norm(a.states - b.states)
        dx = float(spec_n2.norm(x1 - x2))
        # one-step factor of the scheme: e^{(z_n - lambda_1) dt} + L dt
        factors = np.exp((a.z_values[:-1] - lam1) * DT) + L * DT
        scheme = dx * np.concatenate([[1.0], np.cumprod(factors)])
        assert np.all(gap <= scheme * (1 + 1e-12))
        n_path = float(np.exp(np.sum(np.abs(a.z_values[:-1])) * DT))
        assert gap[-1] <= apriori_bound(spec_n2, L, dx, T, n_path)


def test_observed_order_is_first(spec_n2, saturating, quiet_scenario):
    x = np.full(8, 0.8)
    dt = 2.0 ** -7
    reference = integrate(quiet_scenario, spec_n2, saturating, x, 1.0, dt / 8).states[-1]
    coarse = integrate(quiet_scenario, spec_n2, saturating, x, 1.0, dt).states[-1]
    fine = integrate(quiet_scenario, spec_n2, saturating, x, 1.0, dt / 2).states[-1]
    order = np.log2(np.linalg.norm(coarse - reference) / np.linalg.norm(fine - reference))
    assert order >= 0.9


def test_original_frame_jumps_with_the_multiplier(scalar_spec, make_scenario):
    scenario = make_scenario(1.5, 2)
    ou = scenario_ou(scenario)
    jumps = scenario.subordinated.jump_times(0.1, 1.9)
    sizes = np.abs(np.asarray(ou(jumps)) - np.asarray(ou.left_limit(jumps)))
    t_star = float(jumps[np.argmax(sizes)])
    c = 0.6
    times = np.array([t_star - 1e-9, t_star])
    traj = Trajectory(times, np.full((2, 1), c), "conjugated", scenario, ou)
    v = to_original(traj).states[:, 0]
    expected = c * (np.exp(float(ou(t_star))) - np.exp(float(ou.left_limit(t_star))))
    assert sizes.max() > 1e-3
    assert v[1] - v[0] == pytest.approx(expected, abs=1e-6)
