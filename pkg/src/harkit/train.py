"""Training: targets, loss, optimizer, early stopping, the fit loop and
checkpoint persistence."""
from __future__ import annotations

import csv
import json
import logging
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, stratified_split
from .errors import (BadMagicError, DataError, DimensionError, FormatError, ParameterError,
                     ShapeMismatchError, TruncatedFileError)
from .layers import layer_from_config
from .models import CONVLSTM, SINGLE_FRAME_CNN, Model
from .tensor import DTYPE, Rng, make_rng

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


# ---------------------------------------------------------------- targets and loss

def one_hot_encode(label: int, num_classes: int) -> np.ndarray:
    if not 0 <= label < num_classes:
        raise ParameterError(f"label {label} out of range for {num_classes} classes")
    out = np.zeros(num_classes, dtype=DTYPE)
    out[label] = 1.0
    return out


def one_hot_matrix(labels, num_classes: int) -> np.ndarray:
    return np.stack([one_hot_encode(int(k), num_classes) for k in labels]) if len(labels) else \
        np.zeros((0, num_classes), dtype=DTYPE)


def one_hot_decode(vec) -> int:
    return int(np.argmax(vec))


def categorical_crossentropy(probs: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the pre-softmax logits.

    The gradient assumes ``probs`` came from a softmax: ``(probs - targets) / N``.
    """
    if probs.shape != targets.shape or probs.ndim != 2:
        raise DimensionError(f"crossentropy: probs {list(probs.shape)} vs targets {list(targets.shape)}")
    n = probs.shape[0]
    picked = np.sum(probs * targets, axis=1)
    loss = float(-np.mean(np.log(np.maximum(picked, LOG_FLOOR))))
    return loss, (probs - targets) / n


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if lr <= 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"{name}: gradient {list(g.shape)} vs parameter {list(p.shape)}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------- early stopping

class EarlyStopping:
    """Stops after ``patience`` consecutive epochs without a validation loss
    below ``best - min_delta`` and remembers the weights of the best epoch."""

    def __init__(self, patience: int = 15, min_delta: float = 0.0):
        if patience < 1:
            raise ParameterError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.best_epoch = 0
        self.wait = 0
        self.best_weights = None

    def update(self, epoch: int, val_loss: float, model: Model | None = None) -> bool:
        """Record one epoch; returns True when training should stop."""
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.best_epoch = epoch
            self.wait = 0
            if model is not None:
                self.best_weights = model.get_weights()
            return False
        self.wait += 1
        return self.wait >= self.patience

    def restore(self, model: Model) -> None:
        if self.best_weights is not None:
            model.set_weights(self.best_weights)


# ---------------------------------------------------------------- configuration

@dataclass
class TrainConfig:
    epochs: int = 50
    patience: int = 15
    min_delta: float = 0.0
    learning_rate: float = 1e-3
    batch_size: int | None = None
    val_split: float = 0.2
    test_split: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 < self.val_split < 1.0:
            raise ParameterError(f"val_split must be in (0, 1), got {self.val_split}")
        if not 0.0 < self.test_split < 1.0:
            raise ParameterError(f"test_split must be in (0, 1), got {self.test_split}")
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.min_delta < 0:
            raise ParameterError(f"min_delta must be >= 0, got {self.min_delta}")

    def resolved_batch_size(self, arch_tag: str) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 4 if arch_tag == CONVLSTM else 32

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]

    def to_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.train_acc), repr(r.val_acc)])
        os.replace(tmp, path)


# ---------------------------------------------------------------- fit loop

def evaluate_arrays(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 32):
    """Inference-mode loss and accuracy."""
    probs = model.predict(x, batch_size)
    loss, _ = categorical_crossentropy(probs, one_hot_matrix(y, model.num_classes))
    return loss, float(np.mean(np.argmax(probs, axis=1) == y))


def fit(model: Model, x_train, y_train, x_val, y_val, config: TrainConfig, rng: Rng,
        on_epoch=None) -> TrainHistory:
    """Mini-batch Adam with per-epoch validation and early stopping.

    The model ends up holding the weights of the epoch with the lowest
    validation loss.
    """
    n = len(x_train)
    if n == 0 or len(x_val) == 0:
        raise DataError("training and validation sets must be non-empty")
    batch_size = config.resolved_batch_size(model.arch_tag)
    targets = one_hot_matrix(y_train, model.num_classes)
    params = {name: p for name, p in model.named_params()}
    opt = AdamState()
    stopper = EarlyStopping(config.patience, config.min_delta)
    history = TrainHistory()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            probs, caches = model.forward(x_train[idx], training=True, rng=rng)
            loss, dlogits = categorical_crossentropy(probs, targets[idx])
            layer_grads = model.backward(caches, dlogits)
            grads = {f"{i}.{layer.kind}.{k}": g
                     for i, (layer, lg) in enumerate(zip(model.layers, layer_grads)) for k, g in lg.items()}
            adam_step(params, grads, opt, config.learning_rate)
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == y_train[idx]))
        val_loss, val_acc = evaluate_arrays(model, x_val, y_val)
        rec = EpochRecord(epoch, loss_sum / n, val_loss, correct / n, val_acc)
        history.records.append(rec)
        log.info("epoch %d: loss %.4f acc %.3f val_loss %.4f val_acc %.3f",
                 epoch, rec.train_loss, rec.train_acc, val_loss, val_acc)
        if on_epoch is not None:
            on_epoch(rec)
        history.stopped_epoch = epoch
        if stopper.update(epoch, val_loss, model):
            log.info("early stopping at epoch %d; best epoch %d", epoch, stopper.best_epoch)
            break
    stopper.restore(model)
    history.best_epoch = stopper.best_epoch
    return history


def dataset_arrays(model: Model, dataset: Dataset):
    """Model inputs and labels for a dataset.

    The single-frame CNN gets one example per frame carrying its video's
    label; the ConvLSTM gets one stacked sequence per video.
    """
    if not dataset.samples:
        return np.zeros((0, *model.input_shape), dtype=DTYPE), np.zeros(0, dtype=np.int64)
    if model.arch_tag == SINGLE_FRAME_CNN:
        x = np.concatenate([s.frames for s in dataset.samples])
        y = np.concatenate([np.full(len(s.frames), s.label, dtype=np.int64) for s in dataset.samples])
        return x, y
    for s in dataset.samples:
        if len(s.frames) != model.seq_len:
            raise DimensionError(f"{s.source}: {len(s.frames)} frames, model expects {model.seq_len}")
    return np.stack([s.frames for s in dataset.samples]), dataset.labels


def train_model(model: Model, train_set: Dataset, config: TrainConfig, rng: Rng | None = None,
                on_epoch=None) -> tuple[Model, TrainHistory]:
    """Stratified validation split of ``train_set``, then :func:`fit`."""
    if rng is None:
        rng = make_rng(config.seed)
    if len(train_set.class_names) != model.num_classes:
        raise DataError(f"dataset has {len(train_set.class_names)} classes, model expects {model.num_classes}")
    counts = train_set.class_counts()
    for name, c in zip(train_set.class_names, counts):
        if c < 2:
            raise DataError(f"class {name!r} has {c} training video(s); need >= 2 for a validation split")
    fit_set, val_set = stratified_split(train_set, config.val_split, rng)
    x_tr, y_tr = dataset_arrays(model, fit_set)
    x_val, y_val = dataset_arrays(model, val_set)
    history = fit(model, x_tr, y_tr, x_val, y_val, config, rng, on_epoch)
    return model, history


# ---------------------------------------------------------------- checkpoints

MAGIC = b"HARCKPT1\n"


def _manifest(model: Model, class_names=None) -> dict:
    return {
        "arch_tag": model.arch_tag,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "seq_len": model.seq_len,
        "class_names": list(class_names) if class_names is not None else None,
        "layers": [{"kind": layer.kind, "config": layer.config()} for layer in model.layers],
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in model.named_arrays()],
    }


def save_checkpoint(model: Model, path, class_names=None) -> None:
    """Write magic, a u64-length-prefixed JSON manifest, then every array as
    little-endian float32 in manifest order. The write is atomic."""
    manifest = json.dumps(_manifest(model, class_names), sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for _, arr in model.named_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    os.replace(tmp, path)


def read_manifest(path) -> dict:
    return _read(path)[0]


def _read(path):
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(data) < pos + 8:
        raise TruncatedFileError(f"{path}: truncated before manifest length")
    (mlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) < pos + mlen:
        raise TruncatedFileError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[pos:pos + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable manifest: {exc}") from exc
    return manifest, data, pos + mlen


def load_checkpoint(path) -> Model:
    """Rebuild the architecture from the manifest and load all arrays.

    The model's ``class_names`` attribute is set from the manifest.
    """
    manifest, data, pos = _read(path)
    try:
        layers = [layer_from_config(entry["kind"], entry["config"]) for entry in manifest["layers"]]
        model = Model(layers, manifest["input_shape"], manifest["num_classes"], manifest["arch_tag"],
                      manifest["seq_len"])
    except (KeyError, TypeError, ParameterError, DimensionError) as exc:
        raise FormatError(f"{path}: manifest does not describe a valid model: {exc}") from exc
    expected = model.expected_shapes()
    listed = {t["name"]: tuple(t["shape"]) for t in manifest["tensors"]}
    if list(listed) != list(expected) or any(listed[k] != expected[k] for k in expected):
        bad = [k for k in expected if listed.get(k) != expected[k]] or sorted(set(listed) ^ set(expected))
        raise ShapeMismatchError(f"{path}: tensor shapes disagree with the declared architecture: {bad}")
    weights = {}
    for name, shape in listed.items():
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if len(data) < pos + nbytes:
            raise TruncatedFileError(f"{path}: payload ends inside tensor {name}")
        weights[name] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(DTYPE).reshape(shape)
        pos += nbytes
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes after the last tensor")
    model.set_weights(weights)
    model.class_names = manifest.get("class_names")
    return model
