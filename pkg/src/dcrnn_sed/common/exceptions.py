"""Exceptions raised by the ``dcrnn_sed`` package."""


class DcrnnError(Exception):
    """Base class for all errors raised by ``dcrnn_sed``."""


class InputValidationError(DcrnnError, ValueError):
    """Inputs, shapes or configurations that fail validation."""


class DataError(DcrnnError):
    """A corpus, audio, annotation or container file could not be used."""


class DivergenceError(DcrnnError):
    """The optimisation produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
