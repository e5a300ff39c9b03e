"""Sequential model container and the two video-classification architectures."""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, ParameterError
from .layers import (BatchNormalization, Conv2D, ConvLSTM2D, Dense, Dropout, Flatten,
                     GlobalAveragePooling2D, Layer, MaxPooling2D, MaxPooling3D, TimeDistributed)
from .tensor import Rng, make_rng

SINGLE_FRAME_CNN = "single_frame_cnn"
CONVLSTM = "convlstm"

FRAME_SIZE = 64
CHANNELS = 3


class Model:
    """An ordered stack of layers ending in a softmax classifier head.

    ``input_shape`` excludes the batch axis. ``seq_len`` is the number of
    frames sampled per video: the sequence length for the ConvLSTM and
    the number of frames averaged by the single-frame CNN.
    """

    def __init__(self, layers: list[Layer], input_shape, num_classes: int, arch_tag: str,
                 seq_len: int, rng: Rng | None = None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.num_classes = int(num_classes)
        self.arch_tag = arch_tag
        self.seq_len = int(seq_len)
        self.class_names: list[str] | None = None
        self.shapes = self._build(rng)
        self.layers[0].input_grad = False

    def _build(self, rng):
        shapes = [self.input_shape]
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape, rng)
            except DimensionError as exc:
                raise DimensionError(f"layer {i} ({layer.kind}): {exc}") from exc
            shapes.append(shape)
        head = self.layers[-1]
        if shape != (self.num_classes,) or not isinstance(head, Dense) or head.activation != "softmax":
            raise DimensionError(f"model must end in Dense({self.num_classes}, softmax); final shape {shape}")
        return shapes

    # ------------------------------------------------------------ passes

    def forward(self, x, training=False, rng: Rng | None = None):
        """Returns ``(probs, caches)``."""
        if tuple(x.shape[1:]) != self.input_shape:
            raise DimensionError(f"model expects input [N, {', '.join(map(str, self.input_shape))}], got {list(x.shape)}")
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, training, rng)
            caches.append(cache)
        return x, caches

    def predict(self, x, batch_size: int = 32) -> np.ndarray:
        """Inference-mode class probabilities, computed in batches."""
        out = [self.forward(x[s:s + batch_size])[0] for s in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def backward(self, caches, grad_logits):
        """Backpropagate the gradient w.r.t. the head's pre-softmax logits.

        Returns a list (one dict per layer) of parameter gradients.
        """
        grads: list[dict] = [None] * len(self.layers)
        d, grads[-1] = self.layers[-1].backward(caches[-1], grad_logits, skip_activation=True)
        for i in range(len(self.layers) - 2, -1, -1):
            d, grads[i] = self.layers[i].backward(caches[i], d)
        return grads

    # ------------------------------------------------------------ weights

    def named_params(self):
        """Yields ``(name, array)`` for trainable arrays in a fixed order."""
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                yield f"{i}.{layer.kind}.{key}", layer.params[key]

    def named_arrays(self):
        """Trainable and non-trainable arrays, in checkpoint order."""
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                yield f"{i}.{layer.kind}.{key}", layer.params[key]
            for key in sorted(layer.state):
                yield f"{i}.{layer.kind}.{key}", layer.state[key]

    def expected_shapes(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for key, shape in sorted(layer.param_shapes().items()):
                out[f"{i}.{layer.kind}.{key}"] = tuple(shape)
            for key, shape in sorted(layer.state_shapes().items()):
                out[f"{i}.{layer.kind}.{key}"] = tuple(shape)
        return out

    def get_weights(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.named_arrays()}

    def set_weights(self, weights: dict[str, np.ndarray]):
        for name, arr in self.named_arrays():
            if weights[name].shape != arr.shape:
                raise DimensionError(f"{name}: expected shape {list(arr.shape)}, got {list(weights[name].shape)}")
            arr[...] = weights[name]

    def count_params(self) -> int:
        return sum(layer.count_params() for layer in self.layers)

    def summary(self) -> str:
        lines = [f"{self.arch_tag}: input {list(self.input_shape)}, {self.num_classes} classes"]
        for layer, shape in zip(self.layers, self.shapes[1:]):
            lines.append(f"  {layer!r:<60} -> {list(shape)}  params={layer.count_params()}")
        lines.append(f"  total params: {self.count_params()}")
        return "\n".join(lines)


def build_single_frame_cnn(num_classes: int, seq_len: int = 20, seed: int = 0,
                           frame_size: int = FRAME_SIZE) -> Model:
    """Frame classifier: two 64-filter 3x3 ReLU convolutions, batch norm,
    2x2 max pool, global average pool, Dense(256, ReLU), batch norm and a
    softmax head."""
    if num_classes < 2:
        raise ParameterError(f"num_classes must be >= 2, got {num_classes}")
    if seq_len < 1:
        raise ParameterError(f"seq_len must be >= 1, got {seq_len}")
    layers = [
        Conv2D(64, (3, 3), activation="relu"),
        Conv2D(64, (3, 3), activation="relu"),
        BatchNormalization(),
        MaxPooling2D((2, 2)),
        GlobalAveragePooling2D(),
        Dense(256, activation="relu"),
        BatchNormalization(),
        Dense(num_classes, activation="softmax"),
    ]
    return Model(layers, (frame_size, frame_size, CHANNELS), num_classes, SINGLE_FRAME_CNN, seq_len,
                 make_rng(seed))


CONVLSTM_FILTERS = (4, 8, 16)


def build_convlstm(num_classes: int, seq_len: int = 20, seed: int = 0,
                   frame_size: int = FRAME_SIZE) -> Model:
    """Three ConvLSTM2D(3x3, tanh) blocks with 4, 8 and 16 filters, each
    followed by a (1,2,2) max pool and time-distributed dropout of 0.2, then
    flatten and a softmax head."""
    if num_classes < 2:
        raise ParameterError(f"num_classes must be >= 2, got {num_classes}")
    if seq_len < 1:
        raise ParameterError(f"seq_len must be >= 1, got {seq_len}")
    if frame_size < 8:
        raise DimensionError(f"frames of {frame_size}px are too small for three 2x2 spatial pools")
    layers: list[Layer] = []
    for filters in CONVLSTM_FILTERS:
        layers += [
            ConvLSTM2D(filters, (3, 3), activation="tanh"),
            MaxPooling3D((1, 2, 2)),
            TimeDistributed(Dropout(0.2)),
        ]
    layers += [Flatten(), Dense(num_classes, activation="softmax")]
    return Model(layers, (seq_len, frame_size, frame_size, CHANNELS), num_classes, CONVLSTM, seq_len,
                 make_rng(seed))


def build_model(arch_tag: str, num_classes: int, seq_len: int, seed: int = 0) -> Model:
    if arch_tag == SINGLE_FRAME_CNN:
        return build_single_frame_cnn(num_classes, seq_len, seed)
    if arch_tag == CONVLSTM:
        return build_convlstm(num_classes, seq_len, seed)
    raise ParameterError(f"unknown architecture {arch_tag!r}")
