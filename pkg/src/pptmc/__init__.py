"""PPT minimax converse bounds for quantum channel coding."""

from . import channels, converse, hypothesis, operators, sdp, symmetry

__version__ = "0.1.0"

__all__ = ["channels", "converse", "hypothesis", "operators", "sdp", "symmetry", "__version__"]
