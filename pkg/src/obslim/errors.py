"""Exception types raised across the package."""


class ObslimError(Exception):
    """Base class for all errors raised by this package."""


class NotSpdError(ObslimError):
    """A matrix required to be symmetric positive definite is not."""


class TensorFormatError(ObslimError):
    """A tensor container file is malformed or violates its header."""


class ManifestError(ObslimError):
    """A model manifest is inconsistent with itself or with its tensors."""
