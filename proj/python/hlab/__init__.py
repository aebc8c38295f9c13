"""Python access to the hlab magnetic Helmholtz toolkit."""

from ._core import (
    ConfigError,
    Error,
    NumericalError,
    PreconditionError,
    apply_operator,
    describe,
    eikonal_saito,
    fnv1a64,
    norms,
    preset_names,
    preset_text,
    run,
    saito_coefficients,
    solve,
    version,
)

__version__ = version()

__all__ = [
    "ConfigError",
    "Error",
    "NumericalError",
    "PreconditionError",
    "apply_operator",
    "describe",
    "eikonal_saito",
    "fnv1a64",
    "norms",
    "preset_names",
    "preset_text",
    "run",
    "saito_coefficients",
    "solve",
    "version",
]
