"""Detect Aedes aegypti from wingbeat audio with mel-spectrogram CNNs."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
