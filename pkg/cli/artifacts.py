"""CSV and manifest writers and readers for experiment directories."""
import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ANALYSIS.metrics import AnalysisError, latency_to_target

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
CSV_SCHEMA_VERSION = 1

RUN_MANIFEST = "manifest.json"
INFERENCE_CURVE = "inference_curve.csv"
SUMMARY = "summary.csv"
FIRING_STATS = "firing_stats.csv"
ISIH = "isih.csv"
BURST_COMPOSITION = "burst_composition.csv"
LAYER_SPIKES = "layer_spikes.csv"
COMPARISON = "comparison.csv"

INFERENCE_CURVE_COLUMNS = ["time_step", "accuracy", "cumulative_spikes"]
SUMMARY_COLUMNS = [
    "input_coding", "hidden_coding", "v_th", "beta", "dnn_accuracy", "snn_accuracy", "target",
    "latency", "status", "total_spikes", "hidden_spikes", "num_neurons", "spiking_density",
]
FIRING_STATS_COLUMNS = ["layer", "neuron_id", "num_spikes", "log10_rate", "regularity"]
ISIH_COLUMNS = ["isi", "count"]
BURST_COMPOSITION_COLUMNS = ["burst_length", "spike_count", "fraction"]
LAYER_SPIKES_COLUMNS = ["layer", "kind", "coding", "num_neurons", "total_spikes"]


def format_value(value: Any) -> str:
    """CSV cell text: empty for None and NaN, 9 significant digits for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return f"{float(value):.9g}"
    return str(value)


def sha256_of(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for block in iter(lambda: file.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class RunManifest(BaseModel):
    """
    Record of one command invocation, written after every other output file.
    """
    model_config = ConfigDict(extra="forbid")

    command: str
    tool_version: str = TOOL_VERSION
    csv_schema_version: int = CSV_SCHEMA_VERSION
    seed: int
    config: Dict[str, Any]
    files: Dict[str, str] = Field(default_factory=dict, description="sha256 per emitted file, keyed by name")
    duration_seconds: float = Field(0.0, ge=0.0)
    extras: Dict[str, Any] = Field(default_factory=dict)


@dataclass
class OutputWriter:
    """
    Tracks the files one command writes into a directory.

    On failure, `discard` removes everything written so far; `finish` writes the
    manifest with a checksum for each tracked file.
    """
    directory: str
    written: List[str] = field(default_factory=list)

    def __post_init__(self):
        os.makedirs(self.directory, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def track(self, path: str) -> str:
        path = os.path.abspath(path)
        if path not in self.written:
            self.written.append(path)
        return path

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        path = self.track(self.path(name))
        with open(path, "w", encoding="utf-8", newline="") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(columns)
            count = 0
            for row in rows:
                writer.writerow([format_value(value) for value in row])
                count += 1
        logger.info(f"Wrote {count} rows to {path}")
        return path

    def write_json(self, name: str, document: Dict[str, Any]) -> str:
        path = self.track(self.path(name))
        with open(path, "w", encoding="utf-8") as file:
            json.dump(document, file, indent=2, sort_keys=True, allow_nan=False)
            file.write("\n")
        return path

    def discard(self) -> None:
        for path in self.written:
            try:
                os.remove(path)
                logger.warning(f"Removed partial output {path}")
            except FileNotFoundError:
                pass
            except OSError as e:
                logger.error(f"Could not remove partial output {path}: {e}", exc_info=True)
        self.written.clear()

    def finish(self, manifest_name: str, manifest: RunManifest) -> str:
        manifest.files = {
            os.path.relpath(path, self.directory): sha256_of(path) for path in self.written
        }
        path = self.path(manifest_name)
        with open(path, "w", encoding="utf-8") as file:
            file.write(manifest.model_dump_json(indent=2))
            file.write("\n")
        logger.info(f"Wrote manifest {path} covering {len(manifest.files)} files")
        return path


def read_csv(path: str) -> List[Dict[str, str]]:
    if not os.path.isfile(path):
        raise AnalysisError(f"missing artifact: {path}")
    with open(path, "r", encoding="utf-8", newline="") as file:
        return list(csv.DictReader(file))


def read_manifest(directory: str, name: str = RUN_MANIFEST) -> RunManifest:
    path = os.path.join(directory, name)
    if not os.path.isfile(path):
        error_msg = f"run directory {directory} has no {name}; it is missing or did not complete"
        logger.error(error_msg)
        raise AnalysisError(error_msg)
    try:
        with open(path, "r", encoding="utf-8") as file:
            return RunManifest.model_validate_json(file.read())
    except ValidationError as e:
        raise AnalysisError(f"invalid manifest {path}: {e}") from e


@dataclass
class RunArtifacts:
    directory: str
    manifest: RunManifest
    summary: List[Dict[str, str]]
    curve: List[Dict[str, str]]

    @property
    def name(self) -> str:
        return str(self.manifest.extras.get("run_name") or os.path.basename(os.path.normpath(self.directory)))

    @property
    def num_images(self) -> int:
        return int(self.manifest.extras["num_images"])

    def summary_for(self, target: str) -> Optional[Dict[str, str]]:
        for row in self.summary:
            if row["target"] == target:
                return row
        return None


def read_run(directory: str) -> RunArtifacts:
    manifest = read_manifest(directory)
    if manifest.command != "run":
        raise AnalysisError(f"{directory} holds a '{manifest.command}' manifest, not a run")
    if "num_images" not in manifest.extras:
        raise AnalysisError(f"manifest of {directory} lacks num_images")
    return RunArtifacts(
        directory=directory,
        manifest=manifest,
        summary=read_csv(os.path.join(directory, SUMMARY)),
        curve=read_csv(os.path.join(directory, INFERENCE_CURVE)),
    )


def check_consistency(run: RunArtifacts) -> None:
    """
    Recompute latency, spikes and density of each summary row from the inference curve.

    Raises:
        AnalysisError: On the first mismatch
    """
    accuracies = [float(row["accuracy"]) for row in run.curve]
    cumulative = [int(row["cumulative_spikes"]) for row in run.curve]
    if not accuracies:
        raise AnalysisError(f"{run.directory}: empty inference curve")
    for row in run.summary:
        latency = latency_to_target(accuracies, float(row["target"]))
        expected_latency = format_value(latency)
        if row["latency"] != expected_latency:
            raise AnalysisError(
                f"{run.directory}: target {row['target']} latency {row['latency']!r} "
                f"but the inference curve gives {expected_latency!r}"
            )
        step = latency if latency is not None else len(accuracies)
        spikes = cumulative[step - 1] / run.num_images
        if row["total_spikes"] != format_value(spikes):
            raise AnalysisError(
                f"{run.directory}: target {row['target']} total_spikes {row['total_spikes']} "
                f"but the inference curve gives {format_value(spikes)}"
            )
        density = spikes / (int(row["num_neurons"]) * step)
        if row["spiking_density"] != format_value(density):
            raise AnalysisError(
                f"{run.directory}: target {row['target']} spiking_density {row['spiking_density']} "
                f"but recomputes to {format_value(density)}"
            )
