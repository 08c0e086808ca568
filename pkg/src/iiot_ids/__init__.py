"""Attention-based LSTM-CNN intrusion detection for IIoT traffic, in plain numpy.

Subpackages: :mod:`tensor` (autodiff), :mod:`layers`, :mod:`models`,
:mod:`data`, :mod:`smote`, :mod:`train`, :mod:`metrics`, :mod:`cli`.
"""
from ._accel import BACKEND
from .errors import IdsError

__version__ = "0.1.0"

__all__ = ["BACKEND", "IdsError", "__version__"]
