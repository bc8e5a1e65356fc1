"""Export trained S4D/S5 checkpoint archives to the interchange JSON format."""

from .convert import (
    LAYOUTS,
    SCHEMA_VERSION,
    convert,
    group_layers,
    load_archive,
    reencode,
)
from .errors import ConvertError, StabilityViolation, UnrecognizedLayout

__version__ = "0.1.0"

__all__ = [
    "LAYOUTS",
    "SCHEMA_VERSION",
    "convert",
    "group_layers",
    "load_archive",
    "reencode",
    "ConvertError",
    "StabilityViolation",
    "UnrecognizedLayout",
    "__version__",
]
