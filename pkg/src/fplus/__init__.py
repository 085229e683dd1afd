"""FPLUS / PFPLUS activation laboratory."""

from .activations import ActivationKind, PfplusParams, fplus, pfplus
from .tensor import Tensor

__version__ = "0.1.0"
