"""Model construction, inference, single-example training, and batch fitting.

Two architectures are provided: the reduced squeeze-style CNN used for the
image experiments and a small MLP surrogate so the protocol-level tests run
in seconds. Both are built from the layer kernel and share one training path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import ops
from .adam import Adam
from .layers import Conv2D, Dense, Dropout, Fire, Flatten, GlobalAvgPool, Layer, MaxPool2D, Mish
from .rng import RngState

# (squeeze_fm, expand_fm) per fire block, in network order
_FIRE_PLAN = [(4, 16), (4, 16), (8, 32), (8, 32)]


@dataclass
class Model:
    arch: dict
    layers: list[Layer]
    input_shape: tuple
    num_classes: int

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def descriptor_json(self) -> str:
        return json.dumps(self.arch, sort_keys=True, separators=(",", ":"))

    def copy(self) -> "Model":
        """Independent model with identical parameters and dropout rng state."""
        other = build_from_descriptor(self.arch, rng=RngState(0))
        for dst, src in zip(other.parameters(), self.parameters()):
            dst[...] = src
        for ld, ls in zip(other.layers, self.layers):
            if isinstance(ld, Dropout):
                ld.rng = ls.rng.clone()
        return other

    def set_parameters(self, values: list[np.ndarray]) -> None:
        own = self.parameters()
        if len(own) != len(values):
            raise ValueError("parameter list length mismatch")
        for dst, src in zip(own, values):
            if dst.shape != src.shape:
                raise ValueError(f"parameter shape mismatch: {dst.shape} vs {src.shape}")
            dst[...] = src


def build_simplified_squeezenet(input_shape, num_classes: int, rng: RngState,
                                dtype=np.float32) -> Model:
    """conv1(16fm 3x3 s2) -> maxpool(3 s2) -> fire(4,16) x2 -> fire(8,32) ->
    maxpool(3 s2) -> fire(8,32) -> dropout(0.5) -> conv(n 1x1) -> global avg pool."""
    h, w, c = input_shape
    layers: list[Layer] = [
        Conv2D(3, c, 16, stride=2, rng=rng, dtype=dtype, name="conv1"),
        Mish(),
        MaxPool2D(3, 2, name="maxpool1"),
    ]
    in_ch = 16
    for i, (sq, ex) in enumerate(_FIRE_PLAN, start=1):
        layers.append(Fire(in_ch, sq, ex, rng=rng, dtype=dtype, name=f"fire{i}"))
        in_ch = 2 * ex
        if i == 3:
            layers.append(MaxPool2D(3, 2, name="maxpool3"))
    layers.append(Dropout(0.5, seed=rng.next_u64()))
    layers.append(Conv2D(1, in_ch, num_classes, rng=rng, dtype=dtype, name="conv5"))
    layers.append(GlobalAvgPool())

    shape = (h, w, c)
    for layer in layers:
        shape = layer.out_shape(shape)  # raises naming the layer that underflows

    arch = {"arch": "squeezenet", "input_shape": [h, w, c], "num_classes": num_classes}
    return Model(arch=arch, layers=layers, input_shape=(h, w, c), num_classes=num_classes)


def build_mlp(input_dim: int, hidden: int, num_classes: int, rng: RngState,
              dtype=np.float32) -> Model:
    if input_dim < 1 or hidden < 1 or num_classes < 1:
        raise ValueError("input_dim, hidden and num_classes must all be >= 1")
    layers: list[Layer] = [
        Flatten(),
        Dense(input_dim, hidden, rng=rng, dtype=dtype, name="hidden"),
        Mish(),
        Dense(hidden, num_classes, rng=rng, dtype=dtype, name="logits"),
    ]
    arch = {"arch": "mlp", "input_dim": input_dim, "hidden": hidden,
            "num_classes": num_classes}
    return Model(arch=arch, layers=layers, input_shape=(input_dim,),
                 num_classes=num_classes)


def build_from_descriptor(arch: dict, rng: RngState, dtype=np.float32) -> Model:
    kind = arch.get("arch")
    if kind == "squeezenet":
        return build_simplified_squeezenet(tuple(arch["input_shape"]),
                                           arch["num_classes"], rng, dtype)
    if kind == "mlp":
        return build_mlp(arch["input_dim"], arch["hidden"], arch["num_classes"], rng, dtype)
    raise ValueError(f"unknown architecture {kind!r}")


def forward(model: Model, x: np.ndarray, mode: str = "infer") -> np.ndarray:
    if mode not in ("infer", "train"):
        raise ValueError(f"unknown mode {mode!r}")
    if model.arch["arch"] == "mlp":
        if int(np.prod(x.shape)) != model.input_shape[0]:
            raise ValueError(f"input size {x.shape} does not flatten to {model.input_shape[0]}")
    elif tuple(x.shape) != model.input_shape:
        raise ValueError(f"input shape {x.shape} does not match model {model.input_shape}")
    train = mode == "train"
    for layer in model.layers:
        x = layer.forward(x, train)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite logits")
    return x


def backward(model: Model, dlogits: np.ndarray) -> None:
    dy = dlogits
    for layer in reversed(model.layers):
        dy = layer.backward(dy)


def train_step(model: Model, x: np.ndarray, label: int, adam: Adam) -> tuple[float, np.ndarray]:
    """One gradient step on one example. Returns (pre-update loss, logits)."""
    logits = forward(model, x, "train")
    loss = ops.scc_loss(logits, label)
    backward(model, ops.scc_loss_backward(logits, label))
    adam.step(model.parameters(), model.gradients())
    return loss, logits


@dataclass
class TrainSettings:
    epochs: int
    batch_size: int
    validation_ratio: float = 0.0
    checkpoint_monitor: str = "loss"
    lr: float = 0.001

    def __post_init__(self):
        if not 0.0 <= self.validation_ratio < 1.0:
            raise ValueError("validation_ratio must be in [0, 1)")
        if self.checkpoint_monitor not in ("loss", "val_loss"):
            raise ValueError("checkpoint_monitor must be 'loss' or 'val_loss'")
        if self.checkpoint_monitor == "val_loss" and self.validation_ratio == 0.0:
            raise ValueError("monitoring val_loss requires validation_ratio > 0")


@dataclass
class FitResult:
    history: dict[str, list[float]]
    best_model: Model
    best_epoch: int
    best_value: float
    steps: int = 0


def _stratified_split(labels: np.ndarray, ratio: float, rng: RngState):
    """Per-class holdout; classes too small to donate an example stay in train."""
    train_idx, val_idx = [], []
    for c in np.unique(labels):
        idx = list(np.flatnonzero(labels == c))
        rng.shuffle(idx)
        n_val = int(len(idx) * ratio)
        val_idx.extend(idx[:n_val])
        train_idx.extend(idx[n_val:])
    return np.array(sorted(train_idx)), np.array(sorted(val_idx))


def _evaluate_loss_acc(model: Model, images, labels) -> tuple[float, float]:
    total, correct = 0.0, 0
    for x, y in zip(images, labels):
        logits = forward(model, x, "infer")
        total += ops.scc_loss(logits, int(y))
        correct += int(np.argmax(logits)) == int(y)
    n = len(labels)
    return total / n, correct / n


def fit(model: Model, images: np.ndarray, labels: np.ndarray,
        settings: TrainSettings, rng: RngState) -> FitResult:
    """Shuffled mini-batch training with best-epoch parameter retention.

    The monitored metric is compared after every epoch and the parameters with
    the lowest value seen so far are kept (ties keep the earlier epoch).
    """
    n = len(labels)
    if n == 0:
        raise ValueError("empty training set")
    if settings.validation_ratio > 0.0:
        train_idx, val_idx = _stratified_split(np.asarray(labels), settings.validation_ratio, rng)
    else:
        train_idx, val_idx = np.arange(n), np.array([], dtype=np.int64)

    adam = Adam(lr=settings.lr)
    params = model.parameters()
    history: dict[str, list[float]] = {"loss": [], "accuracy": []}
    if len(val_idx):
        history["val_loss"] = []
        history["val_accuracy"] = []

    best_value = np.inf
    best_epoch = -1
    best_model = model.copy()
    steps = 0

    order = list(train_idx)
    for epoch in range(settings.epochs):
        rng.shuffle(order)
        epoch_loss, epoch_correct = 0.0, 0
        for start in range(0, len(order), settings.batch_size):
            batch = order[start:start + settings.batch_size]
            acc_grads = [np.zeros_like(p) for p in params]
            for i in batch:
                logits = forward(model, images[i], "train")
                epoch_loss += ops.scc_loss(logits, int(labels[i]))
                epoch_correct += int(np.argmax(logits)) == int(labels[i])
                backward(model, ops.scc_loss_backward(logits, int(labels[i])))
                for g_acc, g in zip(acc_grads, model.gradients()):
                    g_acc += g
            inv = 1.0 / len(batch)
            for g_acc in acc_grads:
                g_acc *= inv
            adam.step(params, acc_grads)
            steps += 1

        history["loss"].append(epoch_loss / len(order))
        history["accuracy"].append(epoch_correct / len(order))
        if len(val_idx):
            val_loss, val_acc = _evaluate_loss_acc(model, images[val_idx], labels[val_idx])
            history["val_loss"].append(val_loss)
            history["val_accuracy"].append(val_acc)

        monitored = history[settings.checkpoint_monitor][-1]
        if monitored < best_value:
            best_value = monitored
            best_epoch = epoch
            best_model = model.copy()

    return FitResult(history=history, best_model=best_model, best_epoch=best_epoch,
                     best_value=best_value, steps=steps)
