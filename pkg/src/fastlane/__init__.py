"""Bounded counters with a consensusless fast path, FastUnlock recovery and a
deterministic simulator to exercise them."""

from .protocol import Committee

__all__ = ["Committee"]
__version__ = "0.1.0"
