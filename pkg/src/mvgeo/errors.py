"""Exception hierarchy shared across the toolkit."""


class MvgeoError(Exception):
    """Base class for all toolkit errors."""


class BehindCamera(MvgeoError):
    """A point (or box corner) has non-positive depth in the camera frame."""


class RayParallelOrAscending(MvgeoError):
    """A back-projected ray never descends onto the ground plane."""


class DegenerateConfiguration(MvgeoError):
    """A calibration problem is rank-deficient for the requested solver."""


class NoConvergence(MvgeoError):
    """Iterative refinement hit its evaluation cap without converging."""


class EmptyAfterClamp(MvgeoError):
    """A projected 2D box has zero area after clamping to the image."""


class ZeroEnclosingArea(MvgeoError):
    """GIoU is undefined: the smallest enclosing box has zero area."""


class DimensionMismatch(MvgeoError):
    """Two heatmaps with different grid sizes were combined."""


class NoUsableViews(MvgeoError):
    """No camera view can score the pose (all projections failed)."""


class NonDifferentiablePoint(MvgeoError):
    """A finite-difference probe crossed a validity or clamp boundary."""


class NoMatchedEvents(MvgeoError):
    """A camera has no light-change event within the matching window."""


class OutOfSceneRadius(MvgeoError):
    """A detection's ground point landed outside the plausible scene."""


class PlacementFailure(MvgeoError):
    """Non-overlapping vehicle placement exceeded its attempt budget."""
