"""
Configuration for the IQ estimation workbench.

This module exposes the configuration settings from the settings module.
"""

# Import and expose from settings module
from iqestimation.config.settings import (
    settings,
    configure_logging,
    ConfigModel,
    IQ_LABELS,
    DEFAULT_SEED,
    DISCARDED_PARAMETERS,
    RECALCULATED_PARAMETERS,
)

# Define what's exported from this package
__all__ = [
    "settings",
    "configure_logging",
    "ConfigModel",
    "IQ_LABELS",
    "DEFAULT_SEED",
    "DISCARDED_PARAMETERS",
    "RECALCULATED_PARAMETERS",
]
