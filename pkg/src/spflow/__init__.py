"""Sign-changing bound states of the Schrodinger-Poisson system.

Descending-flow solver with invariant cone neighborhoods: auxiliary
linear operator, simplex minimax for a sign-changing critical point,
and a perturbation homotopy for slow-growth nonlinearities.
"""

from .grid import Field, Grid3
from .model import ModelConfig

__all__ = ["Field", "Grid3", "ModelConfig"]
__version__ = "0.1.0"
