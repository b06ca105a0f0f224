import json
import logging
import os
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ANALYSIS.energy import DEFAULT_PROFILES, EnergyProfile
from CODING.schemes import CodingKind, CodingScheme
from DNN.normalize import DEFAULT_PERCENTILE
from DNN.train import DEFAULT_ARCHITECTURE, LayerPlan, TrainSettings

# Set up logging
logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for missing or unknown keys and out-of-range values in an experiment config."""


class DatasetPaths(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None

    def split(self, split: str):
        """(images, labels) paths of a split; ConfigError if either is unset."""
        images = getattr(self, f"{split}_images")
        labels = getattr(self, f"{split}_labels")
        if images is None or labels is None:
            raise ConfigError(f"dataset.{split}_images and dataset.{split}_labels are required for this command")
        return images, labels


# Threshold constant of the input encoder when the config leaves it out
INPUT_GAIN_DEFAULTS = {CodingKind.REAL: 1.0, CodingKind.RATE: 1.0}

PATH_FIELDS = ("model_path", "normalized_model_path", "output_dir", "baseline_dir")


class ExperimentConfig(BaseModel):
    """
    One experiment: model files, dataset, the input-hidden coding pair and the evaluation protocol.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: Optional[str] = Field(None, min_length=1)
    model_path: str = "artifacts/model.json"
    normalized_model_path: str = "artifacts/model_normalized.json"
    dataset: DatasetPaths = Field(default_factory=DatasetPaths)

    input_coding: CodingScheme
    hidden_coding: CodingScheme
    v_th: float = Field(1.0, gt=0.0, description="Hidden threshold constant when hidden_coding omits v_th")
    reset_mode: str = Field("subtract", pattern="^(subtract|zero)$")

    time_steps: int = Field(..., ge=1)
    target_accuracies: List[float] = Field(default_factory=list)
    target_margins: List[float] = Field(default_factory=lambda: [0.01])
    batch_size: int = Field(100, ge=1)
    seed: int = 0
    energy_profiles: List[EnergyProfile] = Field(default_factory=lambda: list(DEFAULT_PROFILES))
    output_dir: str = "runs/default"

    train: TrainSettings = Field(default_factory=TrainSettings)
    architecture: List[LayerPlan] = Field(default_factory=lambda: list(DEFAULT_ARCHITECTURE), min_length=1)
    percentile: float = Field(DEFAULT_PERCENTILE, gt=0.0, le=100.0)
    calibration_size: Optional[int] = Field(None, ge=1)
    eval_subset: Optional[int] = Field(1000, ge=1)
    record_fraction: float = Field(0.1, gt=0.0, le=1.0)
    record_samples: int = Field(100, ge=0)
    workers: int = Field(1, ge=1)
    baseline_dir: Optional[str] = None

    @field_validator("target_accuracies")
    @classmethod
    def _targets_in_range(cls, targets):
        for target in targets:
            if not 0.0 < target <= 1.0:
                raise ValueError(f"target accuracy {target} outside (0, 1]")
        return targets

    @field_validator("target_margins")
    @classmethod
    def _margins_in_range(cls, margins):
        for margin in margins:
            if not 0.0 <= margin < 1.0:
                raise ValueError(f"target margin {margin} outside [0, 1)")
        return margins

    @field_validator("energy_profiles")
    @classmethod
    def _unique_profiles(cls, profiles):
        names = [profile.name for profile in profiles]
        if len(set(names)) != len(names):
            raise ValueError(f"energy profile names must be unique, got {names}")
        return profiles

    @model_validator(mode="after")
    def _check_coding_pair(self) -> "ExperimentConfig":
        if self.input_coding.kind == CodingKind.BURST:
            raise ValueError("input_coding: burst coding is only valid for hidden layers")
        if self.hidden_coding.kind == CodingKind.REAL:
            raise ValueError("hidden_coding: real coding is only valid for the input layer")
        if not self.target_accuracies and not self.target_margins:
            raise ValueError("at least one of target_accuracies or target_margins is required")
        return self

    @property
    def run_name(self) -> str:
        return self.name or os.path.basename(os.path.normpath(self.output_dir))

    @property
    def input_scheme(self) -> CodingScheme:
        """Input scheme with its threshold constant filled in: real and rate 1.0, phase k."""
        scheme = self.input_coding
        if scheme.v_th is not None:
            return scheme
        if scheme.kind == CodingKind.PHASE:
            return scheme.with_v_th(float(scheme.k))
        return scheme.with_v_th(INPUT_GAIN_DEFAULTS[scheme.kind])

    @property
    def hidden_scheme(self) -> CodingScheme:
        """
        Hidden scheme with its threshold constant filled in from the config v_th.

        Phase thresholds sum to about one constant over a period of k steps, so a
        phase scheme without its own v_th gets k * v_th to pass v_th per step.
        """
        scheme = self.hidden_coding
        if scheme.v_th is not None:
            return scheme
        if scheme.kind == CodingKind.PHASE:
            return scheme.with_v_th(scheme.k * self.v_th)
        return scheme.with_v_th(self.v_th)

    def snapshot(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def describe_validation_error(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        loc = ".".join(str(part) for part in item.get("loc", ())) or "config"
        problems.append(f"{loc}: {item.get('msg')}")
    return "; ".join(problems)


def _resolve_paths(raw: Dict[str, Any], base_dir: str) -> Dict[str, Any]:
    def resolve(value):
        if value is None or os.path.isabs(value):
            return value
        return os.path.normpath(os.path.join(base_dir, value))

    resolved = dict(raw)
    for key in PATH_FIELDS:
        if isinstance(resolved.get(key), str):
            resolved[key] = resolve(resolved[key])
    if isinstance(resolved.get("dataset"), dict):
        resolved["dataset"] = {
            key: resolve(value) if isinstance(value, str) else value
            for key, value in resolved["dataset"].items()
        }
    return resolved


def parse_config(raw: Any, base_dir: str = ".") -> ExperimentConfig:
    """Validate a config document; relative paths resolve against `base_dir`."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
    defaults = {key: ExperimentConfig.model_fields[key].get_default(call_default_factory=True)
                for key in ("model_path", "normalized_model_path", "output_dir")}
    try:
        return ExperimentConfig.model_validate(_resolve_paths({**defaults, **raw}, base_dir))
    except ValidationError as e:
        raise ConfigError(describe_validation_error(e)) from e


def load_config(path: str) -> ExperimentConfig:
    """
    Read and validate an experiment config file.

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: If the file is not valid JSON or any field is missing, unknown or out of range
    """
    if not os.path.isfile(path):
        error_msg = f"Config file not found: {path}"
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)

    with open(path, "r", encoding="utf-8") as file:
        try:
            raw = json.load(file)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e

    try:
        config = parse_config(raw, os.path.dirname(os.path.abspath(path)))
    except ConfigError as e:
        logger.error(f"Invalid config {path}: {e}")
        raise

    logger.info(
        f"Loaded config {path}: {config.input_scheme.label()}-{config.hidden_scheme.label()}, "
        f"v_th {config.hidden_scheme.v_th}, {config.time_steps} time steps"
    )
    return config


def apply_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """
    Merge command-line overrides into `config` and validate the result again.

    None values are ignored. `out` replaces output_dir and `subset` replaces
    eval_subset; paths given here are relative to the working directory.
    """
    renamed = {"out": "output_dir", "subset": "eval_subset"}
    updates = {}
    for key, value in overrides.items():
        if value is None:
            continue
        key = renamed.get(key, key)
        if key in PATH_FIELDS:
            value = os.path.abspath(value)
        updates[key] = value
    if not updates:
        return config
    logger.info(f"Config overrides: {updates}")
    try:
        return ExperimentConfig.model_validate({**config.model_dump(), **updates})
    except ValidationError as e:
        raise ConfigError(describe_validation_error(e)) from e
