import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np

from CODING.schemes import CodingKind, CodingScheme
from DNN import ops
from DNN.forward import ShapeError
from INGESTION.layers import LayeredModel, LayerKind, LayerSpec
from .neurons import NeuronLayerState, ResetMode

logger = logging.getLogger(__name__)


class ConversionError(ValueError):
    """Raised when a model cannot be mapped onto the spiking simulator."""


@dataclass
class SnnLayer:
    """A spiking (hidden) layer or the non-spiking readout, backed by its source LayerSpec."""
    source_index: int
    spec: LayerSpec
    in_shape: Tuple[int, ...]
    out_shape: Tuple[int, ...]
    role: Literal["hidden", "readout"] = "hidden"

    @property
    def kind(self) -> LayerKind:
        return self.spec.kind

    @property
    def size(self) -> int:
        return int(np.prod(self.out_shape))


def psp_step(layer: SnnLayer, incoming: np.ndarray) -> np.ndarray:
    """
    Post-synaptic input z(t) of a layer.

    `incoming` holds the presynaptic weighted spikes (spike flag times the
    threshold at emission) or analog values for real-coded input, shaped
    (batch, *in_shape). Weighted layers add their bias every step; avgpool
    layers average over their window.
    """
    incoming = np.asarray(incoming, dtype=np.float64)
    expected = int(np.prod(layer.in_shape))
    if incoming.ndim < 2 or int(np.prod(incoming.shape[1:])) != expected:
        raise ShapeError(
            f"layer {layer.source_index}: incoming shape {incoming.shape} does not match {layer.in_shape}"
        )
    spec = layer.spec
    batch = incoming.reshape((len(incoming),) + tuple(layer.in_shape))
    if spec.kind == LayerKind.DENSE:
        return ops.dense_forward(batch, spec.weight_matrix(), spec.bias)
    if spec.kind == LayerKind.CONV2D:
        return ops.conv2d_forward(batch, spec)
    return ops.avgpool_forward(batch, spec.window, spec.stride)


@dataclass
class SnnNetwork:
    input_shape: Tuple[int, ...]
    input_scheme: CodingScheme
    hidden_scheme: CodingScheme
    layers: List[SnnLayer]
    reset_mode: ResetMode = "subtract"
    states: List[NeuronLayerState] = field(default_factory=list, repr=False)
    readout: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def hidden_layers(self) -> List[SnnLayer]:
        return self.layers[:-1]

    @property
    def readout_layer(self) -> SnnLayer:
        return self.layers[-1]

    @property
    def input_size(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def input_spiking(self) -> bool:
        return self.input_scheme.kind != CodingKind.REAL

    def layer_sizes(self) -> List[int]:
        """Neuron counts per recorded layer: the input layer first, then each hidden layer."""
        return [self.input_size] + [layer.size for layer in self.hidden_layers]

    @property
    def num_spiking_neurons(self) -> int:
        hidden = sum(layer.size for layer in self.hidden_layers)
        return hidden + (self.input_size if self.input_spiking else 0)

    def reset(self, batch_size: int) -> None:
        """Zero every membrane potential and readout accumulator and set all burst gains to 1."""
        with_burst = self.hidden_scheme.kind == CodingKind.BURST
        self.states = [
            NeuronLayerState.initial((batch_size,) + tuple(layer.out_shape), with_burst=with_burst)
            for layer in self.hidden_layers
        ]
        self.readout = np.zeros((batch_size, self.readout_layer.size), dtype=np.float64)

    def describe(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "input_coding": self.input_scheme.model_dump(mode="json"),
            "hidden_coding": self.hidden_scheme.model_dump(mode="json"),
            "reset_mode": self.reset_mode,
            "num_spiking_neurons": self.num_spiking_neurons,
            "layers": [
                {
                    "source_index": layer.source_index,
                    "kind": layer.kind.value,
                    "role": layer.role,
                    "in_shape": list(layer.in_shape),
                    "out_shape": list(layer.out_shape),
                    "neurons": layer.size,
                }
                for layer in self.layers
            ],
        }


def convert(
    model: LayeredModel,
    input_scheme: CodingScheme,
    hidden_scheme: CodingScheme,
    reset_mode: ResetMode = "subtract",
) -> SnnNetwork:
    """
    Map a normalized model onto the simulator.

    Weights and biases are copied from the model unchanged. ReLU layers are
    dropped because IF firing replaces them, so every non-final weighted layer
    must be followed directly by a ReLU. The final dense layer becomes the
    non-spiking readout.

    Raises:
        ConversionError: On max-pooling, a misplaced ReLU or an unusable coding scheme
    """
    if hidden_scheme.kind == CodingKind.REAL:
        raise ConversionError("real coding is only valid for the input layer")
    if input_scheme.kind == CodingKind.BURST:
        raise ConversionError("burst coding is only valid for hidden layers")
    for role, scheme in (("input", input_scheme), ("hidden", hidden_scheme)):
        if scheme.v_th is None:
            raise ConversionError(f"{role} coding scheme has no threshold constant")

    model.validate()
    shapes = model.shapes()
    last = len(model.layers) - 1
    layers: List[SnnLayer] = []
    in_shape = model.input_shape
    for index, spec in enumerate(model.layers):
        out_shape = shapes[index]
        if spec.kind == LayerKind.MAXPOOL:
            raise ConversionError(f"layer {index}: max pooling has no spiking counterpart; use avgpool")
        if spec.kind == LayerKind.RELU:
            in_shape = out_shape
            continue
        if spec.is_weighted and index < last:
            if model.layers[index + 1].kind != LayerKind.RELU:
                raise ConversionError(
                    f"layer {index} ({spec.kind.value}): hidden weighted layers must be followed by relu"
                )
        role = "readout" if index == last else "hidden"
        layers.append(SnnLayer(index, spec.copy(), tuple(in_shape), tuple(out_shape), role))
        in_shape = out_shape

    net = SnnNetwork(
        input_shape=model.input_shape,
        input_scheme=input_scheme,
        hidden_scheme=hidden_scheme,
        layers=layers,
        reset_mode=reset_mode,
    )
    net.reset(1)
    logger.info(
        f"Converted model to SNN: {len(net.hidden_layers)} spiking layers, "
        f"{net.num_spiking_neurons} spiking neurons, input {input_scheme.label()}, hidden {hidden_scheme.label()}"
    )
    return net
