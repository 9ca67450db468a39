"""Numerical laboratory for the damped continuity equation along rough flows."""

__version__ = "0.1.0"

from .errors import RoughTransportError  # noqa: F401
