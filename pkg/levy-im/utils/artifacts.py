"""
Experiment config files, result tables and the run manifest
"""
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd
import tomli
import tomli_w
from pydantic import ValidationError

from core.errors import ConfigError
from core.models import ExperimentConfig, Manifest

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def load_config(path: PathLike) -> ExperimentConfig:
    """Parse and validate a TOML experiment config"""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="config")
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"config {path} is not valid TOML: {e}", field="config")
    return validate_config(raw)


def validate_config(raw: Dict[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping; the first failing field is reported by its dotted path"""
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"invalid config field '{field}': {first['msg']}", field=field,
                          details={"errors": len(e.errors())})


def apply_overrides(config: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    """Command-line overrides (dotted keys, None = keep) re-validated with the rest of the config"""
    raw = config.model_dump(mode="json")
    for key, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = key.split(".")
        section = raw
        for part in parents:
            section = section[part]
        section[leaf] = value
    return validate_config(raw)


def dump_config(config: ExperimentConfig) -> str:
    """TOML text for a config; parsing it back gives an equal model"""
    return tomli_w.dumps(config.model_dump(mode="json", exclude_none=True))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(config).encode("utf-8")).hexdigest()


def write_table(frame: pd.DataFrame, out_dir: PathLike, name: str) -> Path:
    """CSV with full float precision, so equal runs give identical bytes"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{name}.csv"
    frame.to_csv(target, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"Table saved to {target} ({len(frame)} rows)")
    return target


def write_manifest(manifest: Manifest, out_dir: PathLike) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "manifest.json"
    target.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Manifest saved to {target}")
    return target
