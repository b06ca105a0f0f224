"""
Evaluation of a converted network over a dataset, optionally across worker processes.

The evaluation set is cut into fixed chunks of `chunk_size` samples regardless
of the number of workers, and chunk results are reduced in chunk order, so
outputs do not depend on the degree of parallelism.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from INGESTION.idx import Dataset
from SNN.network import SnnNetwork
from SNN.simulate import RecordSettings, SpikeRecord, simulate

logger = logging.getLogger(__name__)

# Per-process state installed by the pool initializer
_worker_net: Optional[SnnNetwork] = None
_worker_settings: Optional[Tuple[int, RecordSettings]] = None


@dataclass
class ChunkResult:
    start: int
    correct: np.ndarray
    layer_spikes: np.ndarray
    record: SpikeRecord


@dataclass
class Evaluation:
    """Totals over the evaluation set, per elapsed time step."""
    correct: np.ndarray
    layer_spikes: np.ndarray
    record: SpikeRecord
    num_images: int


def evaluate_chunk(
    net: SnnNetwork,
    start: int,
    images: np.ndarray,
    labels: np.ndarray,
    time_steps: int,
    record: RecordSettings,
) -> ChunkResult:
    result = simulate(net, images, time_steps, record=record, sample_ids=np.arange(start, start + len(images)))
    correct = (result.predictions() == labels[None, :]).sum(axis=1)
    return ChunkResult(
        start=start,
        correct=correct.astype(np.int64),
        layer_spikes=result.spike_counts.sum(axis=1),
        record=result.record,
    )


def _init_worker(net: SnnNetwork, time_steps: int, record: RecordSettings) -> None:
    global _worker_net, _worker_settings
    _worker_net = net
    _worker_settings = (time_steps, record)


def _run_chunk(start: int, images: np.ndarray, labels: np.ndarray) -> ChunkResult:
    time_steps, record = _worker_settings
    return evaluate_chunk(_worker_net, start, images, labels, time_steps, record)


def chunks(data: Dataset, chunk_size: int) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
    for start in range(0, len(data), chunk_size):
        yield start, data.images[start:start + chunk_size], data.labels[start:start + chunk_size]


def reduce_chunks(results: List[ChunkResult], num_images: int) -> Evaluation:
    results = sorted(results, key=lambda chunk: chunk.start)
    correct = np.zeros_like(results[0].correct)
    layer_spikes = np.zeros_like(results[0].layer_spikes)
    for chunk in results:
        correct += chunk.correct
        layer_spikes += chunk.layer_spikes
    return Evaluation(
        correct=correct,
        layer_spikes=layer_spikes,
        record=SpikeRecord.merge([chunk.record for chunk in results]),
        num_images=num_images,
    )


def evaluate(
    net: SnnNetwork,
    data: Dataset,
    time_steps: int,
    record: RecordSettings,
    chunk_size: int = 100,
    workers: int = 1,
    progress: bool = True,
) -> Evaluation:
    """
    Simulate every sample of `data` for `time_steps` steps and sum the results.

    Raises:
        ValueError: If the dataset is empty or workers < 1
    """
    if len(data) == 0:
        raise ValueError("evaluation set is empty")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    pieces = list(chunks(data, chunk_size))
    logger.info(
        f"Evaluating {len(data)} images for {time_steps} time steps in {len(pieces)} chunks on {workers} worker(s)"
    )
    bar = tqdm(total=len(pieces), desc="evaluate", disable=not progress, leave=False)
    results: List[ChunkResult] = []
    if workers == 1:
        for start, images, labels in pieces:
            results.append(evaluate_chunk(net, start, images, labels, time_steps, record))
            bar.update(1)
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(net, time_steps, record)
        ) as pool:
            futures = [pool.submit(_run_chunk, start, images, labels) for start, images, labels in pieces]
            for future in futures:
                results.append(future.result())
                bar.update(1)
    bar.close()
    return reduce_chunks(results, len(data))
