import json
import os

import numpy as np
import pytest

from INGESTION.idx import save_idx
from INGESTION.layers import LayeredModel, LayerKind, LayerSpec


@pytest.fixture
def tiny_mlp() -> LayeredModel:
    """4 -> 3 -> relu -> 2 with hand-picked parameters."""
    return LayeredModel(
        input_shape=(4,),
        layers=[
            LayerSpec(
                kind=LayerKind.DENSE, in_dim=4, out_dim=3,
                weights=[0.5, -0.25, 0.1, 0.2, 0.3, -0.4, -0.1, 0.6, 0.25, 0.05, -0.2, 0.7],
                bias=[0.1, 0.0, -0.05],
            ),
            LayerSpec(kind=LayerKind.RELU),
            LayerSpec(
                kind=LayerKind.DENSE, in_dim=3, out_dim=2,
                weights=[1.0, -0.5, 0.25, 0.75, -0.3, 0.4],
                bias=[0.0, 0.1],
            ),
        ],
    ).validate()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_images(rng, labels: np.ndarray, size: int = 6) -> np.ndarray:
    """Noise images with a bright column band whose position encodes the label."""
    images = rng.integers(0, 60, size=(len(labels), size, size))
    band = size // 3
    for i, label in enumerate(labels):
        images[i, :, label * band:(label + 1) * band] += 180
    return np.clip(images, 0, 255).astype(np.uint8)


@pytest.fixture
def synthetic_mnist(tmp_path):
    """Four IDX files of a 3-class 6x6 task in MNIST format; returns their paths."""
    rng = np.random.default_rng(7)
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    paths = {}
    for split, count in (("train", 240), ("test", 60)):
        labels = rng.integers(0, 3, size=count).astype(np.uint8)
        images = make_images(rng, labels)
        paths[f"{split}_images"] = str(data_dir / f"{split}-images-idx3-ubyte")
        paths[f"{split}_labels"] = str(data_dir / f"{split}-labels-idx1-ubyte")
        save_idx(paths[f"{split}_images"], images)
        save_idx(paths[f"{split}_labels"], labels)
    return paths


@pytest.fixture
def write_config(tmp_path, synthetic_mnist):
    """Write an experiment config next to the synthetic data, with relative paths, and return its path."""

    def _write(name: str = "experiment.json", **overrides) -> str:
        document = {
            "model_path": "artifacts/model.json",
            "normalized_model_path": "artifacts/model_normalized.json",
            "dataset": {key: os.path.relpath(path, tmp_path) for key, path in synthetic_mnist.items()},
            "input_coding": {"kind": "phase", "k": 8},
            "hidden_coding": {"kind": "burst", "beta": 2.0},
            "v_th": 0.125,
            "time_steps": 24,
            "target_margins": [0.05],
            "batch_size": 10,
            "seed": 3,
            "output_dir": "runs/phase_burst",
            "train": {"learning_rate": 0.1, "epochs": 15, "batch_size": 16},
            "architecture": [
                {"kind": "dense", "out_dim": 16},
                {"kind": "relu"},
                {"kind": "dense", "out_dim": 10},
            ],
            "eval_subset": None,
            "record_fraction": 0.5,
            "record_samples": 20,
        }
        document.update(overrides)
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    return _write
