"""Low-rank matrix recovery: nuclear-norm decoding, measurement maps,
epsilon-nets and the scalar and matrix concentration tools behind them."""

__version__ = "0.1.0"

from .rng import RngStream

__all__ = ["RngStream", "__version__"]
