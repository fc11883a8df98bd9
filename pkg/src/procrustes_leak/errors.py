"""Exception types raised across the package."""


class ProcrustesLeakError(Exception):
    """Base class for all package errors."""


class DegenerateShape(ProcrustesLeakError):
    """A configuration has zero centroid size."""


class ShapeMismatch(ProcrustesLeakError):
    """Configurations disagree in landmark count or dimension."""


class EmptySample(ProcrustesLeakError):
    """An operation received no specimens or no observations."""


class InvalidSplit(ProcrustesLeakError):
    """A train/test partition cannot give both sides at least one specimen."""


class InvalidSpec(ProcrustesLeakError):
    """A model or simulation specification is internally inconsistent."""


class BoundaryUndefined(ProcrustesLeakError):
    """A grid has no stable or no unstable cells after binarization."""


class NoData(ProcrustesLeakError):
    """A rendering request selected no records."""
