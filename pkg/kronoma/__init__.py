__version__ = "0.1.0"

from kronoma.designer import SquareFactorDesign, find_combining, select_optimal_square
from kronoma.patterns import BinaryMatrix, KroneckerPattern, expand

__all__ = [
    "BinaryMatrix",
    "KroneckerPattern",
    "SquareFactorDesign",
    "expand",
    "find_combining",
    "select_optimal_square",
    "__version__",
]
