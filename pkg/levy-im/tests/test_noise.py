import numpy as np
import pytest
from scipy.stats import ks_2samp

from core.errors import ConfigError, DomainError, RangeError
from core.metrics import uniform_distance
from core.noise import (
    BrownianField,
    CadlagPath,
    build_scenario,
    laplace_check,
    levy_intensity_constant,
    levy_measure_density,
    path_from_csv,
    path_to_csv,
    sample_subordinator,
    shift,
    subordinator_increments,
)


@pytest.fixture
def step_path():
    return CadlagPath(np.array([-1.0, 0.0, 0.5, 1.0]), np.array([2.0, 0.0, 1.0, 3.0]), "constant")


def test_constant_path_is_right_continuous(step_path):
    assert step_path(0.5) == 1.0
    assert step_path.left_limit(0.5) == 0.0
    assert step_path(0.75) == 1.0
    np.testing.assert_array_equal(step_path.jump_times(), [0.0, 0.5, 1.0])


def test_evaluation_outside_horizon_reports_needed_extension(step_path):
    with pytest.raises(RangeError) as err:
        step_path(1.5)
    assert err.value.needed == pytest.approx(0.5)


def test_path_grid_must_increase():
    with pytest.raises(ConfigError):
        CadlagPath(np.array([0.0, 0.0, 1.0]), np.zeros(3))


def test_shift_starts_at_zero_and_composes():
    times = np.linspace(-2.0, 2.0, 81)
    path = CadlagPath(times, np.sin(3.0 * times) + times, "linear")
    once = shift(shift(path, 0.3), 0.45)
    direct = shift(path, 0.75)
    assert once(0.0) == 0.0
    points = np.linspace(-2.5, 1.0, 37)
    np.testing.assert_allclose(once(points), direct(points), atol=1e-12)


def test_shift_by_zero_is_identity(step_path):
    shifted = shift(step_path, 0.0)
    points = np.array([-1.0, -0.3, 0.2, 0.7, 1.0])
    np.testing.assert_array_equal(shifted(points), step_path(points) - step_path(0.0))


def test_levy_intensity_constant_values():
    assert levy_intensity_constant(1.0) == pytest.approx(0.398942280401, rel=1e-10)
    alpha = 1.999
    assert levy_intensity_constant(alpha) / (2.0 - alpha) == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(DomainError):
        levy_intensity_constant(2.0)


def test_levy_measure_density_domain():
    assert levy_measure_density(1.5, 1.0) == pytest.approx(levy_intensity_constant(1.5))
    with pytest.raises(DomainError):
        levy_measure_density(1.5, np.array([1.0, 0.0]))


@pytest.mark.parametrize("alpha", [1.5, 1.9])
def test_subordinator_laplace_transform(alpha):
    table = laplace_check(alpha, [0.5, 1.0, 2.0], 100_000, seed=3)
    assert list(table["lambda"]) == [0.5, 1.0, 2.0]
    assert np.all(np.abs(table["z_score"]) < 3.0)


def test_subordinator_increments_are_self_similar():
    alpha = 1.6
    small = subordinator_increments(alpha, 0.25, 20_000, np.random.default_rng(1)) / 0.25 ** (2.0 / alpha)
    unit = subordinator_increments(alpha, 1.0, 20_000, np.random.default_rng(2))
    assert ks_2samp(small, unit).pvalue > 0.01
    assert np.all(small > 0)


def test_subordinator_rejects_brownian_index():
    with pytest.raises(DomainError):
        subordinator_increments(2.0, 0.1, 10, np.random.default_rng(0))


def test_two_sided_subordinator_is_nondecreasing():
    path = sample_subordinator(1.5, (2.0, 2.0), 2.0 ** -6, seed=5)
    assert path(0.0) == 0.0
    assert np.all(np.diff(path.values) >= 0)
    assert path.kind == "constant"


def test_brownian_field_does_not_depend_on_extension_order():
    mesh = 2.0 ** -6
    early = BrownianField(9, mesh, chunk_length=1.0)
    late = BrownianField(9, mesh, chunk_length=1.0)
    late.extend(1, 5.0)
    a = early.grid_path(64, 64)
    b = late.grid_path(64, 64)
    np.testing.assert_array_equal(a.values, b.values)


def test_scenarios_are_reproducible_and_coupled():
    first = build_scenario(1.7, 11, horizon=(3.0, 1.0), mesh=2.0 ** -7)
    again = build_scenario(1.7, 11, horizon=(3.0, 1.0), mesh=2.0 ** -7)
    np.testing.assert_array_equal(first.subordinated.values, again.subordinated.values)

    twin = first.brownian_twin()
    assert twin.is_brownian and twin.alpha == 2.0
    np.testing.assert_array_equal(twin.subordinated.values, first.brownian.values)

    other_alpha = build_scenario(1.9, 11, horizon=(3.0, 1.0), mesh=2.0 ** -7)
    np.testing.assert_array_equal(other_alpha.brownian.values, first.brownian.values)


def test_build_scenario_validates_inputs():
    with pytest.raises(DomainError):
        build_scenario(1.0, 0)
    with pytest.raises(ConfigError):
        build_scenario(1.5, 0, mesh=-1.0)


def test_path_csv_keeps_kind_and_metadata(tmp_path):
    scenario = build_scenario(1.5, 4, horizon=(1.0, 1.0), mesh=2.0 ** -5)
    target = path_to_csv(scenario.subordinated, tmp_path / "path.csv")
    assert target.read_text().startswith("# kind=constant alpha=1.5 seed=4")
    loaded = path_from_csv(target)
    assert loaded.kind == "constant"
    assert loaded.meta["seed"] == 4
    np.testing.assert_array_equal(loaded.values, scenario.subordinated.values)


def test_zero_brownian_path_gives_zero_subordinated_path():
    scenario = build_scenario(1.5, 6, horizon=(1.0, 1.0), mesh=2.0 ** -6, brownian_scale=0.0)
    assert np.any(np.diff(scenario.subordinator.values) > 0)
    np.testing.assert_array_equal(scenario.subordinated.values, 0.0)


def test_subordinator_median_near_identity_close_to_two():
    draws = subordinator_increments(1.99, 1.0, 10_000, np.random.default_rng(8))
    assert np.median(draws) == pytest.approx(1.0, rel=0.1)


def test_subordinated_path_approaches_brownian_path():
    closer = 0
    for seed in range(100):
        distances = []
        for alpha in (1.5, 1.99):
            scenario = build_scenario(alpha, seed, horizon=(0.5, 1.0), mesh=2.0 ** -8)
            distances.append(uniform_distance(scenario.subordinated, scenario.brownian, 1.0))
        closer += distances[1] < distances[0]
    assert closer >= 80
