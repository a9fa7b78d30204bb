"""Figure rendering for keysched evaluation outputs."""

from .schemas import FIGURES, FigureSpec, SchemaError

__version__ = "0.1.0"

__all__ = ["FIGURES", "FigureSpec", "SchemaError"]
