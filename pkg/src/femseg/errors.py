"""Exception types shared across the package."""


class FemsegError(Exception):
    """Base class for all package errors."""


class TooFewPoints(FemsegError):
    pass


class DegenerateInput(FemsegError):
    pass


class DegenerateSimplex(FemsegError):
    pass


class OutsideSimplex(FemsegError):
    pass


class OutsideMesh(FemsegError):
    pass


class BoundaryNode(FemsegError):
    pass


class UnsupportedShape(FemsegError):
    pass


class ShapeMismatch(FemsegError):
    pass


class Diverged(FemsegError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class TooCloseToFace(FemsegError):
    pass


class NotRemovable(FemsegError):
    pass


class GridMismatch(FemsegError):
    pass


class InvalidSpec(FemsegError):
    pass
