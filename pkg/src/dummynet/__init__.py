"""Controlled pedestrian data augmentation.

Sample a pose from a bounded statistical skeleton model, estimate its
foreground mask, synthesize a person with a chosen appearance into a
chosen background, composite the result into full scenes, and measure
the effect on a small person classifier.
"""

__version__ = "0.1.0"

from .compositing import composite
from .skeleton import Skeleton, NormalizedSkeleton, KeypointHeatmaps

__all__ = ["composite", "Skeleton", "NormalizedSkeleton", "KeypointHeatmaps", "__version__"]
