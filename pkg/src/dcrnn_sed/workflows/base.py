"""Building blocks shared by the workflows: exit codes, protocol files and reporting."""

from typing import Dict, Optional

from aiida.engine import ExitCode, ProcessSpec
from aiida.engine.processes.exit_code import ExitCodesNamespace
from aiida_quantumespresso.workflows.protocols.utils import ProtocolMixin, recursive_merge

from dcrnn_sed.common.exceptions import DataError, DivergenceError, InputValidationError
from dcrnn_sed.common.log import get_logger

LOGGER = get_logger("workflows")

__all__ = ("ExitCode", "ProtocolMixin", "Workflow", "recursive_merge")


class Workflow:
    """Base class of the multi-step procedures of the package."""

    _specs: Dict[type, ProcessSpec] = {}

    def __init__(self, label: Optional[str] = None):
        self.label = label or type(self).__name__

    @classmethod
    def define(cls, spec: ProcessSpec) -> None:
        """Define the workflow specification."""
        spec.exit_code(2, "ERROR_INVALID_INPUTS", message="The inputs failed validation.")
        spec.exit_code(3, "ERROR_DATA", message="A corpus, audio, annotation or checkpoint file could not be used.")
        spec.exit_code(4, "ERROR_DIVERGENCE", message="The training loss became NaN or infinite.")

    @classmethod
    def spec(cls) -> ProcessSpec:
        if cls not in Workflow._specs:
            spec = ProcessSpec()
            cls.define(spec)
            Workflow._specs[cls] = spec
        return Workflow._specs[cls]

    @property
    def exit_codes(self) -> ExitCodesNamespace:
        return self.spec().exit_codes

    @classmethod
    def exit_code_for(cls, exception: Exception) -> ExitCode:
        """Map an exception raised while running the workflow onto one of its exit codes."""
        exit_codes = cls.spec().exit_codes
        if isinstance(exception, DivergenceError):
            return exit_codes.ERROR_DIVERGENCE
        if isinstance(exception, DataError):
            return exit_codes.ERROR_DATA
        if isinstance(exception, (InputValidationError, ValueError)):
            return exit_codes.ERROR_INVALID_INPUTS
        raise exception

    def report(self, message: str) -> None:
        """Log ``message`` at ``INFO`` level, prefixed with the workflow label."""
        LOGGER.info(f"{self.label}: {message}")
