import json
import logging
import os
from typing import Annotated, List, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .layers import FORMAT_VERSION, LayeredModel, LayerKind, LayerSpec, ModelFormatError

# Set up logging
logger = logging.getLogger(__name__)


class _LayerDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DenseDocument(_LayerDocument):
    kind: Literal["dense"]
    in_dim: int = Field(..., ge=1)
    out_dim: int = Field(..., ge=1)
    weights: List[float]
    bias: List[float]


class Conv2dDocument(_LayerDocument):
    kind: Literal["conv2d"]
    in_h: int = Field(..., ge=1)
    in_w: int = Field(..., ge=1)
    in_c: int = Field(..., ge=1)
    out_c: int = Field(..., ge=1)
    k_h: int = Field(..., ge=1)
    k_w: int = Field(..., ge=1)
    stride: int = Field(1, ge=1)
    padding: Literal["valid", "same"] = "valid"
    weights: List[float]
    bias: List[float]


class PoolDocument(_LayerDocument):
    kind: Literal["avgpool", "maxpool"]
    window: int = Field(..., ge=1)
    stride: int = Field(..., ge=1)


class ReluDocument(_LayerDocument):
    kind: Literal["relu"]


LayerDocument = Annotated[
    Union[DenseDocument, Conv2dDocument, PoolDocument, ReluDocument],
    Field(discriminator="kind"),
]


class ModelDocument(BaseModel):
    """JSON schema of a model file."""
    model_config = ConfigDict(extra="forbid")

    format_version: int
    input_shape: List[int] = Field(..., min_length=1, max_length=3)
    layers: List[LayerDocument] = Field(..., min_length=1)


def _describe_validation_error(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        loc = item.get("loc", ())
        if len(loc) >= 2 and loc[0] == "layers" and isinstance(loc[1], int):
            field_path = ".".join(str(part) for part in loc[3:]) or "kind"
            problems.append(f"layer {loc[1]}: {field_path}: {item.get('msg')}")
        else:
            problems.append(f"{'.'.join(str(part) for part in loc) or 'document'}: {item.get('msg')}")
    return "; ".join(problems)


def _document_to_model(document: ModelDocument) -> LayeredModel:
    layers = []
    for layer_doc in document.layers:
        layers.append(LayerSpec(**layer_doc.model_dump()))
    return LayeredModel(
        input_shape=tuple(document.input_shape),
        layers=layers,
        format_version=document.format_version,
    )


def model_to_dict(model: LayeredModel) -> dict:
    layers = []
    for layer in model.layers:
        entry = {"kind": layer.kind.value}
        if layer.kind == LayerKind.DENSE:
            entry.update(in_dim=layer.in_dim, out_dim=layer.out_dim)
        elif layer.kind == LayerKind.CONV2D:
            entry.update(
                in_h=layer.in_h, in_w=layer.in_w, in_c=layer.in_c, out_c=layer.out_c,
                k_h=layer.k_h, k_w=layer.k_w, stride=layer.stride, padding=layer.padding,
            )
        elif layer.kind in (LayerKind.AVGPOOL, LayerKind.MAXPOOL):
            entry.update(window=layer.window, stride=layer.stride)
        if layer.is_weighted:
            # float repr round-trips exactly through json
            entry["weights"] = layer.weights.tolist()
            entry["bias"] = layer.bias.tolist()
        layers.append(entry)
    return {
        "format_version": model.format_version,
        "input_shape": list(model.input_shape),
        "layers": layers,
    }


def parse_model(text: str) -> LayeredModel:
    """Parse and validate a model document from its JSON text."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}") from e

    if isinstance(raw, dict) and raw.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {raw.get('format_version')}, expected {FORMAT_VERSION}")

    try:
        document = ModelDocument.model_validate(raw)
    except ValidationError as e:
        raise ModelFormatError(_describe_validation_error(e)) from e

    return _document_to_model(document).validate()


def load_model(path: str) -> LayeredModel:
    """
    Read a model file and return a validated LayeredModel.

    Raises:
        FileNotFoundError: If the file does not exist
        ModelFormatError: If the document is malformed or the layer shapes do not compose
    """
    if not os.path.isfile(path):
        error_msg = f"Model file not found: {path}"
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)

    logger.info(f"Reading model file: {path}")
    with open(path, "r", encoding="utf-8") as file:
        text = file.read()

    try:
        model = parse_model(text)
    except ModelFormatError as e:
        logger.error(f"Invalid model file {path}: {e}")
        raise

    logger.info(f"Loaded model with {len(model.layers)} layers, input shape {model.input_shape}")
    return model


def save_model(model: LayeredModel, path: str) -> None:
    """Validate `model` and write it to `path`; nothing is written if validation fails."""
    model.validate()
    text = json.dumps(model_to_dict(model), separators=(",", ":"), allow_nan=False)

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        file.write(text)
        file.write("\n")
    logger.info(f"Saved model with {len(model.layers)} layers to {path}")


def describe_model(model: LayeredModel) -> str:
    parts = [f"input{model.input_shape}"]
    for layer, shape in zip(model.layers, model.shapes()):
        parts.append(f"{layer.kind.value}{shape}")
    return " -> ".join(parts)
