"""Layer specs, parameter container, training loop and inference for the two CNNs."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import ClassVar, Union

import numpy as np
from tqdm import tqdm

from hblab_app.core import layers as L
from hblab_app.core.errors import ContractError, TrainingDivergedError

logger = logging.getLogger(__name__)


# ─────────────────────────────────────────────────────────────────────────────
# Layer descriptors
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class InputLayer:
    kind: ClassVar[str] = "input"
    height: int
    width: int
    channels: int


@dataclass(frozen=True)
class ConvLayer:
    kind: ClassVar[str] = "conv"
    filters: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: str = "same"


@dataclass(frozen=True)
class ReluLayer:
    kind: ClassVar[str] = "relu"


@dataclass(frozen=True)
class FullyConnectedLayer:
    kind: ClassVar[str] = "fully_connected"
    nodes: int


@dataclass(frozen=True)
class DropoutLayer:
    kind: ClassVar[str] = "dropout"
    rate: float


@dataclass(frozen=True)
class SoftmaxOutputLayer:
    kind: ClassVar[str] = "softmax_output"
    classes: int


@dataclass(frozen=True)
class RegressionOutputLayer:
    kind: ClassVar[str] = "regression_output"
    dim: int


LayerSpec = Union[
    InputLayer, ConvLayer, ReluLayer, FullyConnectedLayer, DropoutLayer, SoftmaxOutputLayer, RegressionOutputLayer
]
_LAYER_TYPES = {
    cls.kind: cls
    for cls in (
        InputLayer, ConvLayer, ReluLayer, FullyConnectedLayer, DropoutLayer, SoftmaxOutputLayer, RegressionOutputLayer
    )
}
_OUTPUT_KINDS = ("softmax_output", "regression_output")


def layer_descriptor(layer: LayerSpec) -> dict:
    return {"kind": layer.kind, **dataclasses.asdict(layer)}


def layer_from_descriptor(desc: dict) -> LayerSpec:
    values = dict(desc)
    kind = values.pop("kind", None)
    if kind not in _LAYER_TYPES:
        raise ContractError(f"unknown layer kind {kind!r}")
    try:
        return _LAYER_TYPES[kind](**values)
    except TypeError as exc:
        raise ContractError(f"bad {kind} descriptor {desc}: {exc}") from exc


def output_width(layer: LayerSpec) -> int:
    return layer.classes if layer.kind == "softmax_output" else layer.dim


def layer_shapes(spec) -> list[tuple[int, int, int]]:
    """Output shape (h, w, c) of every layer; raises before any work on a broken chain."""
    spec = tuple(spec)
    if not spec or spec[0].kind != "input":
        raise ContractError("network must start with an input layer")
    if spec[-1].kind not in _OUTPUT_KINDS:
        raise ContractError("network must end with an output layer")
    if any(layer.kind in _OUTPUT_KINDS for layer in spec[:-1]) or any(l.kind == "input" for l in spec[1:]):
        raise ContractError("exactly one input layer first and one output layer last")
    shapes = [(spec[0].height, spec[0].width, spec[0].channels)]
    for layer in spec[1:]:
        h, w, c = shapes[-1]
        if layer.kind == "conv":
            ho, wo = L.conv_output_hw(h, w, layer.kernel_h, layer.kernel_w, layer.stride, layer.padding)
            shapes.append((ho, wo, layer.filters))
        elif layer.kind == "fully_connected":
            shapes.append((1, 1, layer.nodes))
        elif layer.kind in _OUTPUT_KINDS:
            shapes.append((1, 1, output_width(layer)))
        elif layer.kind == "dropout" and not 0.0 <= layer.rate < 1.0:
            raise ContractError(f"dropout rate {layer.rate} outside [0, 1)")
        else:
            shapes.append((h, w, c))
    return shapes


def param_shapes(spec) -> list[dict[str, tuple[int, ...]]]:
    shapes = layer_shapes(spec)
    out: list[dict[str, tuple[int, ...]]] = [{}]
    for i, layer in enumerate(tuple(spec)[1:], start=1):
        h, w, c = shapes[i - 1]
        if layer.kind == "conv":
            out.append({"w": (layer.kernel_h, layer.kernel_w, c, layer.filters), "b": (layer.filters,)})
        elif layer.kind in ("fully_connected",) + _OUTPUT_KINDS:
            nodes = shapes[i][2]
            out.append({"w": (h * w * c, nodes), "b": (nodes,)})
        else:
            out.append({})
    return out


def standard_network(
    height: int,
    width: int,
    output: SoftmaxOutputLayer | RegressionOutputLayer,
    filters: int = 64,
    kernel: tuple[int, int] = (2, 2),
    fc_nodes: int = 512,
    dropout: float = 0.5,
) -> tuple[LayerSpec, ...]:
    """The 14-layer stack shared by the selection and precoder networks."""
    conv = ConvLayer(filters, kernel[0], kernel[1])
    return (
        InputLayer(height, width, 3),
        conv, ReluLayer(),
        conv, ReluLayer(),
        conv, ReluLayer(),
        FullyConnectedLayer(fc_nodes), ReluLayer(), DropoutLayer(dropout),
        FullyConnectedLayer(fc_nodes), ReluLayer(), DropoutLayer(dropout),
        output,
    )


# ─────────────────────────────────────────────────────────────────────────────
# Model
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class Model:
    spec: tuple[LayerSpec, ...]
    params: list[dict[str, np.ndarray]]
    seed: int
    dtype: str = "float64"
    metadata: dict = field(default_factory=dict)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        first = self.spec[0]
        return first.height, first.width, first.channels

    @property
    def task(self) -> str:
        return "selection" if self.spec[-1].kind == "softmax_output" else "precoder"

    @property
    def output_dim(self) -> int:
        return output_width(self.spec[-1])

    def check_shapes(self) -> None:
        expected = param_shapes(self.spec)
        if len(expected) != len(self.params):
            raise ContractError(f"{len(self.params)} parameter groups for {len(expected)} layers")
        for i, (want, got) in enumerate(zip(expected, self.params)):
            if set(want) != set(got) or any(tuple(got[k].shape) != want[k] for k in want):
                raise ContractError(f"layer {i} parameters do not match {want}")


def init_model(spec, seed: int, dtype: str = "float64") -> Model:
    """He-scaled Gaussian weights (std sqrt(2 / fan_in)), zero biases."""
    spec = tuple(spec)
    np_dtype = np.dtype(dtype)
    rng = np.random.default_rng(seed)
    params = []
    for shapes in param_shapes(spec):
        if not shapes:
            params.append({})
            continue
        w_shape = shapes["w"]
        fan_in = int(np.prod(w_shape[:-1]))
        w = rng.standard_normal(w_shape, dtype=np_dtype) * np_dtype.type(math.sqrt(2.0 / fan_in))
        params.append({"w": w, "b": np.zeros(shapes["b"], dtype=np_dtype)})
    return Model(spec=spec, params=params, seed=seed, dtype=np_dtype.name, metadata={"epochs_seen": 0})


def _as_batch(model: Model, x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or tuple(x.shape[1:]) != model.input_shape:
        raise ContractError(f"input shape {x.shape} does not match network input {model.input_shape}")
    return x.astype(model.dtype, copy=False)


def forward(model: Model, x, mode: str = "infer", rng: np.random.Generator | None = None):
    """Output ``(batch, classes|dim)`` (logits for the selection network) and the layer caches."""
    out = _as_batch(model, x)
    caches = [None]
    for layer, p in zip(model.spec[1:], model.params[1:]):
        if layer.kind == "conv":
            out, cache = L.conv2d_forward(out, p["w"], p["b"], layer.stride, layer.padding)
        elif layer.kind in ("fully_connected",) + _OUTPUT_KINDS:
            out, cache = L.fully_connected_forward(out, p["w"], p["b"])
        elif layer.kind == "relu":
            out, cache = L.relu_forward(out)
        else:
            out, cache = L.dropout_forward(out, layer.rate, mode, rng)
        caches.append(cache)
    return out.reshape(out.shape[0], -1), caches


def backward(model: Model, caches, grad_out: np.ndarray) -> list[dict[str, np.ndarray]]:
    grads: list[dict[str, np.ndarray]] = [{} for _ in model.spec]
    g = grad_out.reshape(grad_out.shape[0], 1, 1, -1)
    for i in range(len(model.spec) - 1, 0, -1):
        layer, cache = model.spec[i], caches[i]
        if layer.kind == "conv":
            g, gw, gb = L.conv2d_backward(g, cache)
            grads[i] = {"w": gw, "b": gb}
        elif layer.kind in ("fully_connected",) + _OUTPUT_KINDS:
            g, gw, gb = L.fully_connected_backward(g, cache)
            grads[i] = {"w": gw, "b": gb}
        elif layer.kind == "relu":
            g = L.relu_backward(g, cache)
        else:
            g = L.dropout_backward(g, cache)
    return grads


def loss_and_grad(model: Model, out: np.ndarray, y) -> tuple[float, np.ndarray]:
    """Selection: softmax cross-entropy. Precoder: squared error summed over the
    2 N_T outputs, averaged over the batch."""
    if model.task == "selection":
        return L.softmax_cross_entropy(out, y)
    loss, grad = L.mse_loss(out, np.asarray(y).reshape(out.shape))
    width = out.shape[1]
    return loss * width, grad * width


def sgd_step(model: Model, grads, learning_rate: float) -> Model:
    """Plain SGD, w <- w - lr * g, applied in place."""
    if len(grads) != len(model.params):
        raise ContractError("gradient list does not match the parameter groups")
    for p, g in zip(model.params, grads):
        for key, value in p.items():
            if g[key].shape != value.shape:
                raise ContractError(f"gradient shape {g[key].shape} does not match {value.shape}")
            value -= value.dtype.type(learning_rate) * g[key].astype(value.dtype, copy=False)
    return model


# ─────────────────────────────────────────────────────────────────────────────
# Training / inference
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    val_accuracy: float | None


def _targets(model: Model, dataset):
    if dataset.task != model.task:
        raise ContractError(f"{dataset.task} dataset cannot train a {model.task} network")
    if tuple(dataset.inputs.shape[1:]) != model.input_shape:
        raise ContractError(f"dataset inputs {dataset.inputs.shape[1:]} do not match network input {model.input_shape}")
    return dataset.labels if model.task == "selection" else dataset.targets


def evaluate(model: Model, dataset, batch_size: int = 500) -> tuple[float, float | None]:
    """Mean loss (and top-1 accuracy for the selection network) in infer mode."""
    y = _targets(model, dataset)
    n = len(dataset)
    total, correct = 0.0, 0
    for start in range(0, n, batch_size):
        xb = dataset.inputs[start:start + batch_size]
        yb = y[start:start + batch_size]
        out, _ = forward(model, xb, "infer")
        loss, _ = loss_and_grad(model, out, yb)
        total += loss * len(xb)
        if model.task == "selection":
            correct += int(np.sum(np.argmax(out, axis=1) == yb))
    accuracy = correct / n if model.task == "selection" and n else None
    return total / max(n, 1), accuracy


def _improves(model: Model, record: EpochRecord, best: EpochRecord | None) -> bool:
    """Selection ranks by validation accuracy, then loss; the precoder by loss."""
    if record.val_loss is None:
        return False
    if best is None:
        return True
    if model.task == "selection" and record.val_accuracy != best.val_accuracy:
        return record.val_accuracy > best.val_accuracy
    return record.val_loss < best.val_loss


def _snapshot(model: Model) -> list[dict[str, np.ndarray]]:
    return [{k: v.copy() for k, v in p.items()} for p in model.params]


def train(
    model: Model,
    dataset,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    validation_fraction: float = 0.3,
    validation=None,
    progress: bool = False,
    keep_best: bool = True,
) -> tuple[Model, list[EpochRecord]]:
    """Shuffled mini-batch SGD; pass ``validation`` to reuse a recorded split.

    With ``keep_best`` and a validation set, the returned parameters are those of
    the best validation epoch (``metadata["best_epoch"]``), not the last one.
    """
    if len(dataset) == 0:
        raise ContractError("cannot train on an empty dataset")
    if epochs < 0 or batch_size < 1 or lr <= 0:
        raise ContractError(f"bad schedule: epochs={epochs}, batch={batch_size}, lr={lr}")
    if validation is None and validation_fraction > 0:
        dataset, validation = dataset.split(validation_fraction, rng)
    y = _targets(model, dataset)
    n = len(dataset)
    history: list[EpochRecord] = []
    best: EpochRecord | None = None
    best_params = None

    for epoch in tqdm(range(1, epochs + 1), desc=f"train {model.task}", disable=not progress):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = np.sort(order[start:start + batch_size])
            out, caches = forward(model, dataset.inputs[idx], "train", rng)
            loss, grad = loss_and_grad(model, out, y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            sgd_step(model, backward(model, caches, grad), lr)
            total += loss * idx.size
        train_loss = total / n
        val_loss, val_acc = evaluate(model, validation, batch_size) if validation is not None and len(validation) else (None, None)
        if val_loss is not None and not math.isfinite(val_loss):
            raise TrainingDivergedError(epoch, val_loss)
        record = EpochRecord(epoch, train_loss, val_loss, val_acc)
        history.append(record)
        if keep_best and _improves(model, record, best):
            best, best_params = record, _snapshot(model)
        logger.debug("epoch %d: train %.5f val %s acc %s", epoch, train_loss, val_loss, val_acc)

    model.metadata["epochs_seen"] = int(model.metadata.get("epochs_seen", 0)) + epochs
    if history:
        model.metadata["final_train_loss"] = history[-1].train_loss
        model.metadata["final_val_loss"] = history[-1].val_loss
    if best is not None:
        model.params = best_params
        model.metadata.update(best_epoch=best.epoch, best_val_loss=best.val_loss, best_val_accuracy=best.val_accuracy)
        logger.info("kept epoch %d of %d (validation loss %.5f)", best.epoch, epochs, best.val_loss)
    return model, history


def predict_class(model: Model, x) -> tuple[int, np.ndarray]:
    if model.task != "selection":
        raise ContractError("predict_class needs the selection network")
    out, _ = forward(model, x, "infer")
    if out.shape[0] != 1:
        raise ContractError("predict_class takes a single sample")
    probs = L.softmax(out[0].astype(np.float64))
    return int(np.argmax(probs)), probs


def predict_regression(model: Model, x) -> np.ndarray:
    if model.task != "precoder":
        raise ContractError("predict_regression needs the precoder network")
    out, _ = forward(model, x, "infer")
    if out.shape[0] != 1:
        raise ContractError("predict_regression takes a single sample")
    return out[0].astype(np.float64)
