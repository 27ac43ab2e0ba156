"""Numerical checks of linear-boundary crossing tail bounds for
noncommutative supermartingales in finite tensor-product models."""

__version__ = "0.1.0"
