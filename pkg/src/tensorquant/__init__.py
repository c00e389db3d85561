"""Covariant quantization of symmetric contravariant tensors on a coordinate chart."""

from .expr import EquivConfig, equiv, parse, simplify, to_string
from .geometry import Chart, Connection, InhomTensor, Metric, SymTensor, christoffel
from .quantizer import DiffOperator, dequantize, quantize, symbol

__version__ = "0.1.0"

__all__ = [
    "Chart",
    "Connection",
    "DiffOperator",
    "EquivConfig",
    "InhomTensor",
    "Metric",
    "SymTensor",
    "christoffel",
    "dequantize",
    "equiv",
    "parse",
    "quantize",
    "simplify",
    "symbol",
    "to_string",
]
