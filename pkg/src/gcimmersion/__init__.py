"""Isometric immersions of negatively curved metrics via vanishing-viscosity fluid marching."""

__version__ = "0.1.0"

from .errors import GCError  # noqa: F401
