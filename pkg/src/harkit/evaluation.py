"""Video-level prediction, confusion matrices and heatmap export."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, VideoSample, encode_pgm
from .errors import DimensionError, UsageError
from .models import CONVLSTM, SINGLE_FRAME_CNN, Model

HEATMAP_CELL = 32


@dataclass
class VideoPrediction:
    source: str
    true_label: int
    predicted_label: int
    probs: np.ndarray


@dataclass
class EvalReport:
    """Rows of ``confusion`` are true classes, columns predicted ones."""

    accuracy: float
    confusion: np.ndarray
    row_normalized: np.ndarray
    per_video: list[VideoPrediction] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)


def predict_frames(model: Model, frames: np.ndarray) -> np.ndarray:
    """Per-frame class probabilities from the single-frame CNN."""
    if model.arch_tag != SINGLE_FRAME_CNN:
        raise UsageError(f"per-frame prediction needs a {SINGLE_FRAME_CNN} model, got {model.arch_tag}")
    return model.predict(np.asarray(frames))


def average_probabilities(frame_probs: np.ndarray) -> np.ndarray:
    return np.mean(frame_probs, axis=0)


def predict_video_single_frame(model: Model, sample: VideoSample) -> np.ndarray:
    """Mean of the CNN's probability vectors over the video's frames."""
    if model.arch_tag != SINGLE_FRAME_CNN:
        raise UsageError(f"predict_video_single_frame needs a {SINGLE_FRAME_CNN} model, got {model.arch_tag}")
    if len(sample.frames) < 1:
        raise UsageError(f"{sample.source}: video has no frames")
    return average_probabilities(predict_frames(model, sample.frames))


def predict_video_convlstm(model: Model, sample: VideoSample) -> np.ndarray:
    if model.arch_tag != CONVLSTM:
        raise UsageError(f"predict_video_convlstm needs a {CONVLSTM} model, got {model.arch_tag}")
    if len(sample.frames) != model.seq_len:
        raise DimensionError(f"{sample.source}: {len(sample.frames)} frames, model expects {model.seq_len}")
    return model.forward(np.asarray(sample.frames)[None])[0][0]


def predict_video(model: Model, sample: VideoSample) -> np.ndarray:
    if model.arch_tag == SINGLE_FRAME_CNN:
        return predict_video_single_frame(model, sample)
    return predict_video_convlstm(model, sample)


def row_normalize(confusion: np.ndarray) -> np.ndarray:
    totals = confusion.sum(axis=1, keepdims=True).astype(float)
    return np.divide(confusion, totals, out=np.zeros(confusion.shape, dtype=float), where=totals > 0)


def build_report(predictions: list[VideoPrediction], class_names: list[str]) -> EvalReport:
    k = len(class_names)
    confusion = np.zeros((k, k), dtype=np.int64)
    for p in predictions:
        confusion[p.true_label, p.predicted_label] += 1
    total = int(confusion.sum())
    accuracy = float(np.trace(confusion)) / total if total else 0.0
    ordered = sorted(predictions, key=lambda p: p.source)
    return EvalReport(accuracy, confusion, row_normalize(confusion), ordered, list(class_names))


def evaluate(model: Model, test_set: Dataset) -> EvalReport:
    """Predict every video; ties in the argmax go to the lowest class index."""
    if not test_set.samples:
        raise UsageError("cannot evaluate on an empty test set")
    if len(test_set.class_names) != model.num_classes:
        raise UsageError(f"test set has {len(test_set.class_names)} classes, model expects {model.num_classes}")
    preds = []
    for s in test_set.samples:
        probs = predict_video(model, s)
        preds.append(VideoPrediction(s.source, s.label, int(np.argmax(probs)), probs))
    return build_report(preds, test_set.class_names)


# ---------------------------------------------------------------- artifacts

def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _matrix_csv(matrix, class_names, fmt) -> str:
    lines = [",".join(["true\\predicted", *class_names])]
    for name, row in zip(class_names, matrix):
        lines.append(",".join([name, *(fmt(v) for v in row)]))
    return "\n".join(lines) + "\n"


def write_confusion_csv(confusion, class_names, path) -> None:
    _atomic_write(Path(path), _matrix_csv(confusion, class_names, lambda v: str(int(v))).encode())


def heatmap_pixels(matrix: np.ndarray, cell: int = HEATMAP_CELL) -> np.ndarray:
    """Grayscale image with one ``cell x cell`` block per matrix entry,
    intensity ``round(255 * value)``."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"heatmap needs a square matrix, got {list(matrix.shape)}")
    if np.any(matrix < 0) or np.any(matrix > 1):
        raise DimensionError("heatmap entries must lie in [0, 1]")
    levels = np.rint(255.0 * matrix).astype(np.uint8)
    return np.kron(levels, np.ones((cell, cell), dtype=np.uint8))


def render_heatmap(matrix, class_names, csv_path, pgm_path) -> None:
    """Write the row-normalized matrix as CSV (6 decimals) and as a PGM heatmap."""
    pixels = heatmap_pixels(matrix)
    try:
        _atomic_write(Path(csv_path), _matrix_csv(matrix, class_names, lambda v: f"{v:.6f}").encode())
        _atomic_write(Path(pgm_path), encode_pgm(pixels))
    except OSError as exc:
        raise OSError(f"cannot write heatmap to {csv_path} / {pgm_path}: {exc}") from exc


def read_matrix_csv(path):
    """Parse a matrix CSV written by this module; returns ``(class_names, matrix)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    matrix = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return names, matrix


def write_report_csv(report: EvalReport, path) -> None:
    """One row per video: source, true and predicted class, probabilities."""
    names = report.class_names
    lines = [",".join(["source", "true", "predicted", *(f"p_{n}" for n in names)])]
    for p in report.per_video:
        lines.append(",".join([p.source, names[p.true_label], names[p.predicted_label],
                               *(f"{v:.9f}" for v in p.probs)]))
    lines.append(f"# accuracy,{report.accuracy:.6f}")
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())
