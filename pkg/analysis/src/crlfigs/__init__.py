"""crlfigs: evaluation figures over the frozen crlsim metrics CSV schema."""

__version__ = "0.1.0"

from .figures import (
    FIGURE_KINDS,
    PINNED_SCHEMA_VERSION,
    FigureSpec,
    SchemaMismatchError,
    build_table,
    make_figure,
)

__all__ = [
    "FIGURE_KINDS",
    "PINNED_SCHEMA_VERSION",
    "FigureSpec",
    "SchemaMismatchError",
    "build_table",
    "make_figure",
]
