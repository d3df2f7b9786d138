"""
Motor de tensores con diferenciación automática en modo reverso.
"""

from .ConvSpec import ConvSpec
from .Tensor import Tensor, Graph, Operation, backward, no_grad, is_grad_enabled
from . import functional
