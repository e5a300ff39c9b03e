"""Frame ingestion, preprocessing, splitting and synthetic video generation.

A dataset on disk is a directory tree::

    root/<class_name>/<video_name>/<frame files>.ppm|.pgm

Frames are read in lexicographic filename order, resized to 64x64 and
scaled to [0, 1].
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagicError, DataError, FormatError, ParameterError, TruncatedFileError
from .tensor import DTYPE, Rng

FRAME_SIZE = 64
FRAME_EXTENSIONS = (".ppm", ".pgm")


@dataclass
class RawFrame:
    """Decoded 8-bit image; ``pixels`` is a ``[height, width, channels]`` uint8 array."""

    width: int
    height: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, self.channels):
            raise FormatError(
                f"pixel buffer {self.pixels.shape} does not match {self.height}x{self.width}x{self.channels}")


@dataclass
class VideoSample:
    """One labelled video: preprocessed frames stacked as ``[T, 64, 64, 3]``."""

    frames: np.ndarray
    label: int
    class_name: str
    source: str


@dataclass
class Dataset:
    samples: list[VideoSample]
    class_names: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def class_counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=len(self.class_names)).tolist()

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], list(self.class_names))

    def resample(self, seq_len: int) -> "Dataset":
        """Keep ``seq_len`` evenly spaced frames of every video."""
        out = []
        for s in self.samples:
            idx = sample_frame_indices(len(s.frames), seq_len)
            out.append(VideoSample(s.frames[idx], s.label, s.class_name, s.source))
        return Dataset(out, list(self.class_names))


# ---------------------------------------------------------------- PPM / PGM

def _header_tokens(buf: bytes, count: int):
    """Reads ``count`` whitespace-separated header tokens, skipping ``#``
    comments. Returns the tokens and the offset after the single whitespace
    byte that ends the last one."""
    tokens, pos, n = [], 0, len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedFileError("image header ends early")
        tokens.append(buf[start:pos])
    if pos >= n:
        raise TruncatedFileError("image header is not followed by pixel data")
    return tokens, pos + 1


def decode_image(data: bytes) -> RawFrame:
    """Parse a binary PPM (``P6``) or PGM (``P5``) image with maxval 255.

    Grayscale images are expanded to three identical channels.
    """
    magic = data[:2]
    if magic not in (b"P6", b"P5"):
        raise BadMagicError(f"unsupported image magic {magic!r}; expected P6 or P5")
    tokens, offset = _header_tokens(data[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"non-numeric image header {tokens!r}") from exc
    if width < 1 or height < 1:
        raise FormatError(f"invalid image size {width}x{height}")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is accepted")
    channels = 3 if magic == b"P6" else 1
    size = width * height * channels
    payload = data[offset:offset + size]
    if len(payload) < size:
        raise TruncatedFileError(f"pixel payload has {len(payload)} bytes, expected {size}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    if channels == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    return RawFrame(width, height, 3, np.ascontiguousarray(pixels))


def encode_ppm(pixels: np.ndarray) -> bytes:
    """Binary P6 bytes for a ``[H, W, 3]`` uint8 array."""
    h, w, _ = pixels.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Binary P5 bytes for a ``[H, W]`` uint8 array."""
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def read_image(path) -> RawFrame:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


# ---------------------------------------------------------------- preprocessing

def _axis_weights(n_in, n_out):
    # half-pixel centers, edge-clamped
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear_float(pixels: np.ndarray, out_w: int = FRAME_SIZE, out_h: int = FRAME_SIZE) -> np.ndarray:
    """Bilinear resize of a ``[H, W, C]`` array, returned as float64."""
    h, w, _ = pixels.shape
    src = pixels.astype(DTYPE)
    if (h, w) == (out_h, out_w):
        return src
    y0, y1, wy = _axis_weights(h, out_h)
    x0, x1, wx = _axis_weights(w, out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def resize_bilinear(frame: RawFrame, out_w: int = FRAME_SIZE, out_h: int = FRAME_SIZE) -> RawFrame:
    out = resize_bilinear_float(frame.pixels, out_w, out_h)
    pixels = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return RawFrame(out_w, out_h, frame.channels, pixels)


def preprocess_frame(frame: RawFrame) -> np.ndarray:
    """Resize to 64x64 and divide by 255; returns ``[64, 64, 3]`` in [0, 1]."""
    resized = resize_bilinear(frame, FRAME_SIZE, FRAME_SIZE)
    px = resized.pixels
    if px.shape[2] == 1:
        px = np.repeat(px, 3, axis=2)
    return px.astype(DTYPE) / 255.0


def sample_frame_indices(total_frames: int, seq_len: int) -> list[int]:
    """``seq_len`` indices ``floor(i * total / seq_len)`` spread over the video."""
    if seq_len < 1:
        raise ParameterError(f"seq_len must be >= 1, got {seq_len}")
    if total_frames < seq_len:
        raise DataError(f"video too short: {total_frames} frames, need at least {seq_len}")
    return [(i * total_frames) // seq_len for i in range(seq_len)]


# ---------------------------------------------------------------- loading

def _frame_files(video_dir: Path):
    return sorted(p for p in video_dir.iterdir() if p.is_file() and p.suffix.lower() in FRAME_EXTENSIONS)


def load_video(video_dir, seq_len: int) -> np.ndarray:
    """Sampled, preprocessed frames of one video directory as ``[seq_len, 64, 64, 3]``."""
    video_dir = Path(video_dir)
    files = _frame_files(video_dir)
    if len(files) < seq_len:
        raise DataError(f"{video_dir}: video too short ({len(files)} frames, need {seq_len})")
    frames = []
    for i in sample_frame_indices(len(files), seq_len):
        try:
            frames.append(preprocess_frame(read_image(files[i])))
        except (FormatError, OSError) as exc:
            raise DataError(f"{files[i]}: {exc}") from exc
    return np.stack(frames)


def load_dataset(root, seq_len: int = 20) -> Dataset:
    """Load every video under ``root/<class>/<video>/`` in lexicographic order."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset root is not a directory")
    class_dirs = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)
    if not class_dirs:
        raise DataError(f"{root}: no class directories found")
    class_names = [p.name for p in class_dirs]
    samples = []
    for label, cdir in enumerate(class_dirs):
        videos = sorted((p for p in cdir.iterdir() if p.is_dir()), key=lambda p: p.name)
        if not videos:
            raise DataError(f"{cdir}: class has no videos")
        for vdir in videos:
            samples.append(VideoSample(load_video(vdir, seq_len), label, cdir.name, str(vdir)))
    return Dataset(samples, class_names)


# ---------------------------------------------------------------- splitting

def stratified_split(dataset: Dataset, test_fraction: float, rng: Rng):
    """Per-class seeded shuffle; each class contributes
    ``round(test_fraction * n_class)`` samples (at least 1, at most n-1) to
    the second partition. Both partitions keep the input order."""
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError(f"split fraction must be in (0, 1), got {test_fraction}")
    labels = dataset.labels
    test_idx = []
    for k, name in enumerate(dataset.class_names):
        members = np.flatnonzero(labels == k)
        if len(members) < 2:
            raise DataError(f"class {name!r} has {len(members)} sample(s); at least 2 are needed to split")
        n_test = min(max(int(math.floor(test_fraction * len(members) + 0.5)), 1), len(members) - 1)
        test_idx.extend(rng.permutation(members)[:n_test].tolist())
    test_set = set(test_idx)
    train = [i for i in range(len(dataset)) if i not in test_set]
    return dataset.subset(train), dataset.subset(sorted(test_set))


# ---------------------------------------------------------------- synthetic videos

SYNTHETIC_CLASSES = ("growing", "moving_down", "moving_right", "static")

_BG_MEAN, _BG_STD = 60.0, 12.0
_FG_MEAN, _FG_STD = 210.0, 12.0
STATIC_SIDE = 12
MOVING_SIDE = 8
MOVING_SPEED = 2
GROW_MIN, GROW_MAX = 14, 30


def _render(rng: Rng, rows, cols):
    frame = rng.normal(_BG_MEAN, _BG_STD, size=(FRAME_SIZE, FRAME_SIZE, 3))
    square = rng.normal(_FG_MEAN, _FG_STD, size=(len(rows), len(cols), 3))
    frame[np.ix_(rows, cols)] = square
    return np.clip(np.rint(frame), 0, 255).astype(np.uint8)


def render_video(kind: str, n_frames: int, rng: Rng) -> np.ndarray:
    """Render one ``[n_frames, 64, 64, 3]`` uint8 video of a bright square.

    ``static`` keeps a 12px square fixed; ``moving_right``/``moving_down``
    translate an 8px square 2px per frame with wrap-around, starting from a
    uniform random position, so every single frame has the same
    distribution in both classes; ``growing`` expands a centred square from
    14px to 30px.
    """
    size = FRAME_SIZE
    frames = []
    if kind == "static":
        y0, x0 = rng.integers(0, size - STATIC_SIDE + 1, size=2)
        for _ in range(n_frames):
            frames.append(_render(rng, np.arange(y0, y0 + STATIC_SIDE), np.arange(x0, x0 + STATIC_SIDE)))
    elif kind in ("moving_right", "moving_down"):
        y0, x0 = rng.integers(0, size, size=2)
        dy, dx = (0, MOVING_SPEED) if kind == "moving_right" else (MOVING_SPEED, 0)
        side = np.arange(MOVING_SIDE)
        for t in range(n_frames):
            frames.append(_render(rng, (y0 + dy * t + side) % size, (x0 + dx * t + side) % size))
    elif kind == "growing":
        cy, cx = rng.integers(GROW_MAX // 2, size - GROW_MAX // 2 + 1, size=2)
        for t in range(n_frames):
            frac = t / (n_frames - 1) if n_frames > 1 else 0.0
            side = int(round(GROW_MIN + (GROW_MAX - GROW_MIN) * frac))
            top, left = cy - side // 2, cx - side // 2
            frames.append(_render(rng, np.arange(top, top + side), np.arange(left, left + side)))
    else:
        raise ParameterError(f"unknown synthetic class {kind!r}; choose from {', '.join(SYNTHETIC_CLASSES)}")
    return np.stack(frames)


def generate_synthetic_dataset(classes=SYNTHETIC_CLASSES, videos_per_class: int = 40,
                               frames_per_video: int = 20, rng: Rng | None = None) -> Dataset:
    """Deterministic synthetic video dataset; class names are sorted and
    labelled in that order."""
    names = sorted(set(classes))
    if len(names) < 2:
        raise ParameterError("synthetic dataset needs at least 2 distinct classes")
    if videos_per_class < 1 or frames_per_video < 1:
        raise ParameterError("videos_per_class and frames_per_video must be positive")
    for name in names:
        if name not in SYNTHETIC_CLASSES:
            raise ParameterError(f"unknown synthetic class {name!r}; choose from {', '.join(SYNTHETIC_CLASSES)}")
    if rng is None:
        raise ParameterError("generate_synthetic_dataset needs an rng")
    samples = []
    for label, name in enumerate(names):
        for v in range(videos_per_class):
            video = render_video(name, frames_per_video, rng)
            samples.append(VideoSample(video.astype(DTYPE) / 255.0, label, name,
                                       f"synthetic/{name}/video_{v:03d}"))
    return Dataset(samples, names)


def write_dataset(dataset: Dataset, root) -> None:
    """Write every video as ``root/<class>/<video>/frame_NNNN.ppm``."""
    root = Path(root)
    for s in dataset.samples:
        vdir = root / s.class_name / Path(s.source).name
        vdir.mkdir(parents=True, exist_ok=True)
        for t, frame in enumerate(s.frames):
            px = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
            tmp = vdir / f".frame_{t:04d}.ppm.tmp"
            tmp.write_bytes(encode_ppm(px))
            os.replace(tmp, vdir / f"frame_{t:04d}.ppm")
