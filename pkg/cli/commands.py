import logging
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ANALYSIS.energy import EnergyProfile, normalized_energy
from ANALYSIS.metrics import AnalysisError, RunMetrics, TargetMetrics, energy_columns, resolve_targets
from ANALYSIS.spikes import BURST_BUCKETS, burst_composition, firing_stats, isi_histogram
from CODING.schemes import CodingKind
from DNN.forward import accuracy
from DNN.normalize import check_argmax_invariance, normalize_model, record_activations
from DNN.train import init_model, train
from INGESTION.config import ExperimentConfig
from INGESTION.idx import Dataset, load_mnist
from INGESTION.layers import LayeredModel, LayerKind
from INGESTION.parser import describe_model, load_model, save_model
from SNN.network import SnnNetwork, convert
from SNN.simulate import RecordSettings
from . import artifacts
from .artifacts import OutputWriter, RunManifest
from .runner import Evaluation, evaluate

logger = logging.getLogger(__name__)


def _load_split(config: ExperimentConfig, split: str) -> Dataset:
    images, labels = config.dataset.split(split)
    return load_mnist(images, labels, split=split)


def _input_shape(config: ExperimentConfig, data: Dataset) -> Tuple[int, ...]:
    if config.architecture[0].kind == LayerKind.CONV2D:
        return tuple(data.image_shape)
    return (int(np.prod(data.image_shape)),)


def _manifest(command: str, config: ExperimentConfig, started: float, **extras) -> RunManifest:
    return RunManifest(
        command=command,
        seed=config.seed,
        config=config.snapshot(),
        duration_seconds=round(time.perf_counter() - started, 3),
        extras=extras,
    )


def _nan_to_none(value: float) -> Optional[float]:
    return None if value is None or np.isnan(value) else float(value)


def cmd_train(config: ExperimentConfig, progress: bool = True) -> str:
    """Train the configured architecture and write the model file plus train_manifest.json."""
    started = time.perf_counter()
    train_set = _load_split(config, "train")
    test_set = _load_split(config, "test")
    settings = config.train.model_copy(update={"seed": config.seed})

    model = init_model(_input_shape(config, train_set), config.architecture, settings)
    logger.info(f"Training {describe_model(model)}")
    model = train(model, train_set, settings, progress=progress)
    test_accuracy = accuracy(model, test_set.images, test_set.labels, config.batch_size)
    logger.info(f"Test accuracy after training: {test_accuracy:.4f}")

    writer = OutputWriter(os.path.dirname(os.path.abspath(config.model_path)))
    try:
        save_model(model, config.model_path)
        writer.track(config.model_path)
        writer.finish("train_manifest.json", _manifest(
            "train", config, started,
            test_accuracy=test_accuracy,
            train_samples=len(train_set),
            test_samples=len(test_set),
        ))
    except Exception:
        writer.discard()
        raise
    return config.model_path


def cmd_normalize(config: ExperimentConfig, progress: bool = True) -> str:
    """
    Normalize the trained model and verify DNN predictions are unchanged on the whole test set.

    Raises:
        NormalizationError: If any test prediction changes
    """
    started = time.perf_counter()
    model = load_model(config.model_path)
    calibration = _load_split(config, "train").head(config.calibration_size)
    test_set = _load_split(config, "test")

    trace = record_activations(model, calibration, config.percentile, config.batch_size)
    normalized = normalize_model(model, trace)
    checked = check_argmax_invariance(model, normalized, test_set.images, config.batch_size)

    writer = OutputWriter(os.path.dirname(os.path.abspath(config.normalized_model_path)))
    try:
        save_model(normalized, config.normalized_model_path)
        writer.track(config.normalized_model_path)
        writer.finish("normalize_manifest.json", _manifest(
            "normalize", config, started,
            percentile=config.percentile,
            calibration_samples=len(calibration),
            checked_images=checked,
            lambda_norm={str(i): s for i, s in enumerate(trace.scales) if model.layers[i].is_weighted},
            dnn_accuracy=accuracy(normalized, test_set.images, test_set.labels, config.batch_size),
        ))
    except Exception:
        writer.discard()
        raise
    return config.normalized_model_path


def _convert(config: ExperimentConfig, model: Optional[LayeredModel] = None) -> SnnNetwork:
    if model is None:
        model = load_model(config.normalized_model_path)
    return convert(model, config.input_scheme, config.hidden_scheme, config.reset_mode)


def cmd_convert(config: ExperimentConfig, progress: bool = True) -> str:
    """Convert the normalized model under the configured coding pair and describe it in network.json."""
    started = time.perf_counter()
    net = _convert(config)
    writer = OutputWriter(config.output_dir)
    try:
        path = writer.write_json("network.json", net.describe())
        writer.finish("convert_manifest.json", _manifest(
            "convert", config, started,
            num_spiking_neurons=net.num_spiking_neurons,
            hidden_layers=len(net.hidden_layers),
        ))
    except Exception:
        writer.discard()
        raise
    return path


@dataclass
class CostRow:
    """Target metrics as read back from a summary.csv row."""
    total_spikes: float
    spiking_density: float
    latency: Optional[int]

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "CostRow":
        return cls(
            total_spikes=float(row["total_spikes"]),
            spiking_density=float(row["spiking_density"]),
            latency=int(row["latency"]) if row["latency"] else None,
        )

    @classmethod
    def from_metrics(cls, metrics: TargetMetrics) -> "CostRow":
        """The same values as written to summary.csv, so energies match a later analyze."""
        return cls(
            total_spikes=float(artifacts.format_value(metrics.total_spikes)),
            spiking_density=float(artifacts.format_value(metrics.spiking_density)),
            latency=metrics.latency,
        )

    @property
    def reached(self) -> bool:
        return self.latency is not None


def _load_baseline(config: ExperimentConfig) -> Optional[artifacts.RunArtifacts]:
    if config.baseline_dir is None:
        return None
    baseline = artifacts.read_run(config.baseline_dir)
    artifacts.check_consistency(baseline)
    return baseline


def _summary_rows(
    config: ExperimentConfig,
    metrics: RunMetrics,
    targets: Sequence[float],
    baseline: Optional[artifacts.RunArtifacts],
) -> List[list]:
    scheme = config.hidden_scheme
    rows = []
    for target in targets:
        at = metrics.at_target(target)
        reference = None
        if baseline is not None:
            row = baseline.summary_for(artifacts.format_value(target))
            if row is None:
                logger.warning(f"Baseline {baseline.directory} has no row for target {target:.9g}")
            else:
                reference = CostRow.from_row(row)
        energy = energy_columns(CostRow.from_metrics(at), reference, config.energy_profiles)
        rows.append([
            config.input_scheme.label(),
            scheme.label(),
            scheme.v_th,
            scheme.beta if scheme.kind == CodingKind.BURST else None,
            metrics.dnn_accuracy,
            at.snn_accuracy,
            at.target,
            at.latency,
            at.status,
            at.total_spikes,
            at.hidden_spikes,
            at.num_neurons,
            at.spiking_density,
        ] + [energy[f"energy_{profile.name}"] for profile in config.energy_profiles])
    return rows


def _write_run_outputs(
    writer: OutputWriter,
    config: ExperimentConfig,
    net: SnnNetwork,
    evaluation: Evaluation,
    metrics: RunMetrics,
    targets: Sequence[float],
    baseline: Optional[artifacts.RunArtifacts],
) -> Dict[str, dict]:
    writer.write_csv(
        artifacts.INFERENCE_CURVE,
        artifacts.INFERENCE_CURVE_COLUMNS,
        ([t + 1, metrics.accuracy[t], metrics.cumulative_spikes[t]] for t in range(metrics.horizon)),
    )
    energy_names = [f"energy_{profile.name}" for profile in config.energy_profiles]
    writer.write_csv(
        artifacts.SUMMARY,
        artifacts.SUMMARY_COLUMNS + energy_names,
        _summary_rows(config, metrics, targets, baseline),
    )

    stats = firing_stats(evaluation.record)
    writer.write_csv(
        artifacts.FIRING_STATS,
        artifacts.FIRING_STATS_COLUMNS,
        ([n.layer, n.neuron, n.num_spikes, n.log10_rate, n.regularity] for n in stats.neurons),
    )

    hidden_record = evaluation.record.restrict(range(1, len(net.hidden_layers) + 1))
    histogram = isi_histogram(hidden_record)
    writer.write_csv(artifacts.ISIH, artifacts.ISIH_COLUMNS, zip(histogram.isi, histogram.count))

    composition = burst_composition(hidden_record)
    writer.write_csv(
        artifacts.BURST_COMPOSITION,
        artifacts.BURST_COMPOSITION_COLUMNS,
        (
            [f"{bucket}+" if bucket == BURST_BUCKETS[-1] else bucket,
             composition.spike_counts[bucket],
             composition.fraction_of(bucket)]
            for bucket in BURST_BUCKETS
        ),
    )

    totals = evaluation.layer_spikes.sum(axis=0)
    layer_rows = [[0, "input", config.input_scheme.label(), net.input_size, totals[0]]]
    for index, layer in enumerate(net.hidden_layers, start=1):
        layer_rows.append([index, layer.kind.value, config.hidden_scheme.label(), layer.size, totals[index]])
    writer.write_csv(artifacts.LAYER_SPIKES, artifacts.LAYER_SPIKES_COLUMNS, layer_rows)

    firing = {
        str(layer): {
            "neurons": aggregate.neurons,
            "mean_log10_rate": _nan_to_none(aggregate.mean_log_rate),
            "mean_regularity": _nan_to_none(aggregate.mean_regularity),
        }
        for layer, aggregate in stats.layers.items()
    }
    firing["burst_fraction"] = composition.burst_fraction
    return firing


def cmd_run(config: ExperimentConfig, progress: bool = True) -> str:
    """
    Simulate the evaluation subset under the configured coding pair and write every run artifact.

    Partial outputs are removed when anything fails; manifest.json is written last.
    """
    started = time.perf_counter()
    test_set = _load_split(config, "test").head(config.eval_subset)
    model = load_model(config.normalized_model_path)
    net = _convert(config, model)
    dnn_accuracy = accuracy(model, test_set.images, test_set.labels, config.batch_size)
    logger.info(f"DNN accuracy on {len(test_set)} evaluation images: {dnn_accuracy:.4f}")
    baseline = _load_baseline(config)

    evaluation = evaluate(
        net,
        test_set,
        config.time_steps,
        RecordSettings(fraction=config.record_fraction, max_samples=config.record_samples),
        chunk_size=config.batch_size,
        workers=config.workers,
        progress=progress,
    )
    metrics = RunMetrics.from_counts(
        evaluation.correct,
        evaluation.layer_spikes,
        num_images=evaluation.num_images,
        num_neurons=net.num_spiking_neurons,
        dnn_accuracy=dnn_accuracy,
        input_spiking=net.input_spiking,
    )
    targets = resolve_targets(dnn_accuracy, config.target_accuracies, config.target_margins)

    writer = OutputWriter(config.output_dir)
    try:
        firing = _write_run_outputs(writer, config, net, evaluation, metrics, targets, baseline)
        writer.finish(artifacts.RUN_MANIFEST, _manifest(
            "run", config, started,
            run_name=config.run_name,
            num_images=evaluation.num_images,
            dnn_accuracy=dnn_accuracy,
            snn_accuracy=metrics.final_accuracy,
            time_steps=config.time_steps,
            num_spiking_neurons=net.num_spiking_neurons,
            firing=firing,
        ))
    except Exception:
        writer.discard()
        raise
    logger.info(
        f"Run {config.run_name}: SNN accuracy {metrics.final_accuracy:.4f} after {config.time_steps} steps "
        f"(DNN {dnn_accuracy:.4f})"
    )
    return config.output_dir


def cmd_analyze(run_dirs: Sequence[str], baseline_name: str, out_dir: str = ".") -> str:
    """
    Join completed runs into comparison.csv with normalized energy relative to the named baseline run.

    Raises:
        AnalysisError: On a missing manifest, inconsistent artifacts, an unknown baseline
            or a baseline that never reached any target
    """
    started = time.perf_counter()
    if not run_dirs:
        raise AnalysisError("no run directories given")
    runs = [artifacts.read_run(directory) for directory in run_dirs]
    for run in runs:
        artifacts.check_consistency(run)

    by_name = {run.name: run for run in runs}
    if baseline_name not in by_name:
        raise AnalysisError(f"baseline run '{baseline_name}' not among {sorted(by_name)}")
    baseline = by_name[baseline_name]
    if not any(row["latency"] for row in baseline.summary):
        raise AnalysisError(f"baseline run '{baseline_name}' reached none of its targets; energy is undefined")

    profiles = [EnergyProfile.model_validate(p) for p in baseline.manifest.config.get("energy_profiles", [])]
    columns = ["run"] + artifacts.SUMMARY_COLUMNS + [f"energy_{p.name}" for p in profiles]
    rows = []
    for run in runs:
        for row in run.summary:
            cost = CostRow.from_row(row)
            reference_row = baseline.summary_for(row["target"])
            reference = CostRow.from_row(reference_row) if reference_row else None
            energies = []
            for profile in profiles:
                if reference is None or not reference.reached or not cost.reached:
                    energies.append(None)
                else:
                    energies.append(normalized_energy(cost, reference, profile))
            rows.append([run.name] + [row[column] for column in artifacts.SUMMARY_COLUMNS] + energies)

    writer = OutputWriter(out_dir)
    try:
        path = writer.write_csv(artifacts.COMPARISON, columns, rows)
        writer.finish("analyze_manifest.json", RunManifest(
            command="analyze",
            seed=baseline.manifest.seed,
            config={"runs": [os.path.abspath(d) for d in run_dirs], "baseline": baseline_name},
            duration_seconds=round(time.perf_counter() - started, 3),
            extras={"profiles": [p.name for p in profiles]},
        ))
    except Exception:
        writer.discard()
        raise
    logger.info(f"Compared {len(runs)} runs against baseline '{baseline_name}'")
    return path
