"""
Reverse-mode differentiable array engine on top of numpy.
"""

from src.autodiff.engine import DiffGraph, DiffNode, Parameter, backpropagate
from src.autodiff.optim import AdamState, adam_step

__all__ = ["DiffGraph", "DiffNode", "Parameter", "backpropagate", "AdamState", "adam_step"]
