"""harkit: human activity recognition from video frames with a single-frame
CNN and a stacked convolutional LSTM, written on top of numpy."""

from .kernels import BACKEND
from .models import build_convlstm, build_single_frame_cnn

__all__ = ["BACKEND", "build_convlstm", "build_single_frame_cnn"]
__version__ = "0.1.0"
