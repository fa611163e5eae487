"""Euler-Boussinesq vertical slice model with its variational diagnostics."""
from .grid import Grid2D
from .dynamics import ModelParams, SliceState, init_state, rk4_step

__version__ = "0.1.0"
__all__ = ["Grid2D", "ModelParams", "SliceState", "init_state", "rk4_step", "__version__"]
