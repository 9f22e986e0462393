"""Logging for the ``dcrnn_sed`` package.

All modules log through children of ``LOGGER``, itself a child of AiiDA's ``AIIDA_LOGGER``, so a single handler
configured by the command line interface or the caller controls the output of the whole package.
"""

import logging

from aiida.common.log import AIIDA_LOGGER

LOGGER = AIIDA_LOGGER.getChild("dcrnn_sed")


def get_logger(name: str) -> logging.Logger:
    """Return the child of the package logger for the module ``name``."""
    if name.startswith("dcrnn_sed."):
        name = name[len("dcrnn_sed.") :]
    return LOGGER.getChild(name)


def configure_logging(verbosity: int = 0) -> None:
    """Attach a stream handler to the package logger.

    :param verbosity: 0 for warnings only, 1 for ``INFO``, 2 or more for ``DEBUG``.
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(asctime)s <%(levelname)s> %(name)s: %(message)s"))
    LOGGER.handlers.clear()
    LOGGER.addHandler(handler)
    LOGGER.setLevel(level)
