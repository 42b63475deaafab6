"""Exception hierarchy for the dummynet package."""


class DummyNetError(Exception):
    """Base class for all package errors."""


class DegeneratePose(DummyNetError):
    """Torso height is zero, the skeleton cannot be normalized."""


class TooFewMembers(DummyNetError):
    """Pose cluster has too few members to fit a bounded component model."""


class ResolutionMismatch(DummyNetError):
    """Input resolution differs from the resolution the model was trained at."""


class DegenerateHull(DummyNetError):
    """Fewer than 3 visible keypoints, or all visible keypoints collinear."""


class EmptyDataset(DummyNetError):
    """Training requested on an empty dataset."""


class BadResolution(DummyNetError):
    """Image does not match the encoder's fixed input resolution."""


class ShapeMismatch(DummyNetError):
    """Array shapes disagree where they are required to match."""


class NonFiniteGradient(DummyNetError):
    """Gradient penalty produced NaN or infinite gradients."""


class NonFiniteLoss(DummyNetError):
    """A loss component is NaN or infinite."""


class DegenerateFit(DummyNetError):
    """Least-squares fit is underdetermined (fewer than 2 distinct inputs)."""


class NoValidPlacement(DummyNetError):
    """No valid insertion point found within the attempt budget."""


class OutOfBounds(DummyNetError):
    """Scaled patch does not fit inside the scene image."""


class EmptyMask(DummyNetError):
    """Patch mask has no foreground pixels, nothing to insert."""


class NoSamples(DummyNetError):
    """Metric requires at least one positive and one negative sample."""


class NoGroundTruth(DummyNetError):
    """Detection evaluation requires at least one ground-truth box."""


class ConfigError(DummyNetError):
    """Configuration file failed to parse or validate."""


class MissingArtifact(DummyNetError):
    """A pipeline stage requires an artifact that has not been produced yet."""
