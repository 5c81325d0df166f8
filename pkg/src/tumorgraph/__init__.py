"""Differentiable CNN engine and batch CLI for 3-class brain-tumor MRI classification."""

__version__ = "0.1.0"

from .tensor import Tensor, backward, no_grad

__all__ = ["Tensor", "backward", "no_grad", "__version__"]
