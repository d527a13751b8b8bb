"""Interactive click-guided segmentation engine.

A small hierarchical-transformer segmentation model driven by positive and
negative user clicks, with click-region similarity steering the attention, a
deterministic trainer, an evaluation harness, and an HTTP service for
interactive use.
"""

from ._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
__version__ = "0.1.0"
