import json
import logging

import pandas as pd
import pytest
import tomli
from typer.testing import CliRunner

from core.errors import ConfigError
from core.models import ExperimentConfig
from main import app
from utils.artifacts import apply_overrides, dump_config, load_config

runner = CliRunner()


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    level = root.level
    yield
    for handler in list(root.handlers):
        if handler.get_name() == "levy-im-console":
            root.removeHandler(handler)
    root.setLevel(level)


GAP_CONFIG = """
experiment = "check-gap"

[spectrum]
K = 8
power = 2.0
N = {N}

[nonlinearity]
preset = "saturating"
eps = 0.5

[solver]
mu = 0.9
"""

NOISE_CONFIG = """
experiment = "noise-stats"

[noise]
alphas = [1.5, 2.0]
seed = 2
mesh = 0.015625

[params]
window = 1.0
laplace_samples = 2000
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_round_trip():
    config = ExperimentConfig()
    assert ExperimentConfig.model_validate(tomli.loads(dump_config(config))) == config


def test_show_defaults_prints_valid_toml():
    result = runner.invoke(app, ["show-defaults"])
    assert result.exit_code == 0
    assert ExperimentConfig.model_validate(tomli.loads(result.stdout)) == ExperimentConfig()


def test_check_gap_passes(tmp_path):
    config = write(tmp_path, "gap.toml", GAP_CONFIG.format(N=2))
    out = tmp_path / "out"
    result = runner.invoke(app, ["run", "--config", str(config), "--out", str(out), "--quiet"])
    assert result.exit_code == 0
    report = pd.read_csv(out / "gap_report.csv")
    assert report["margin"].item() == pytest.approx(5.0 / 3.0, abs=1e-12)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_status"] == 0
    assert "gap_report.csv" in manifest["artifacts"]


def test_check_gap_fails_at_n1(tmp_path):
    config = write(tmp_path, "gap.toml", GAP_CONFIG.format(N=1))
    out = tmp_path / "out"
    result = runner.invoke(app, ["run", "--config", str(config), "--out", str(out), "--quiet"])
    assert result.exit_code == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_status"] == 3
    assert manifest["extra"]["error_type"] == "gap"


def test_bad_alpha_is_a_config_error(tmp_path):
    config = write(tmp_path, "bad.toml", 'experiment = "ou-converge"\n[noise]\nalphas = [2.5]\n')
    with pytest.raises(ConfigError) as err:
        load_config(config)
    assert err.value.field == "noise.alphas.0"
    result = runner.invoke(app, ["run", "--config", str(config), "--quiet"])
    assert result.exit_code == 2


def test_unknown_field_is_rejected(tmp_path):
    config = write(tmp_path, "typo.toml", "[solver]\ntolerance = 1e-3\n")
    with pytest.raises(ConfigError) as err:
        load_config(config)
    assert err.value.field == "solver.tolerance"


def test_missing_config_file(tmp_path):
    result = runner.invoke(app, ["run", "--config", str(tmp_path / "nope.toml"), "--quiet"])
    assert result.exit_code == 2


def test_overrides_are_validated():
    config = ExperimentConfig()
    updated = apply_overrides(config, {"noise.seed": 7, "threads": None})
    assert updated.noise.seed == 7 and updated.threads == config.threads
    with pytest.raises(ConfigError):
        apply_overrides(config, {"threads": 0})


def test_validate_runs_the_gap_check_for_manifold_experiments(tmp_path):
    text = GAP_CONFIG.format(N=1).replace('"check-gap"', '"solve-manifold"')
    config = write(tmp_path, "manifold.toml", text)
    assert runner.invoke(app, ["validate", "--config", str(config)]).exit_code == 3
    ok = write(tmp_path, "ok.toml", GAP_CONFIG.format(N=2))
    assert runner.invoke(app, ["validate", "--config", str(ok)]).exit_code == 0


def test_runs_are_byte_identical(tmp_path):
    config = write(tmp_path, "noise.toml", NOISE_CONFIG)
    for name in ("a", "b"):
        result = runner.invoke(app, ["run", "--config", str(config), "--out", str(tmp_path / name), "--quiet"])
        assert result.exit_code == 0
    produced = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert "laplace_check.csv" in produced and "levy_intensity.csv" in produced
    for name in produced:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_lands_in_manifest(tmp_path):
    config = write(tmp_path, "noise.toml", NOISE_CONFIG)
    out = tmp_path / "out"
    result = runner.invoke(app, ["run", "--config", str(config), "--out", str(out), "--seed", "11", "--quiet"])
    assert result.exit_code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [11]
    assert (out / "subordinated_alpha1.5_seed11.csv").exists()
    assert load_config(out / "config.toml").noise.seed == 11


TRACK_CONFIG = """
experiment = "track-defect"

[spectrum]
K = 8
N = 2

[nonlinearity]
preset = "saturating"
eps = 0.5

[noise]
alphas = [1.5]
seed = 3
mesh = 0.00390625

[solver]
dt = 0.001

[params]
horizon = 1.0
sample_every = 100
"""


@pytest.mark.slow
def test_track_defect_records_the_slope_gate(tmp_path):
    config = write(tmp_path, "track.toml", TRACK_CONFIG)
    out = tmp_path / "out"
    result = runner.invoke(app, ["run", "--config", str(config), "--out", str(out), "--quiet"])
    assert result.exit_code == 0
    summary = pd.read_csv(out / "tracking_summary.csv").iloc[0]
    assert summary["slope_gate"] == pytest.approx(-0.3 * summary["beta"])
    assert bool(summary["passes_gate"]) == (summary["slope"] <= summary["slope_gate"])
