"""Dense SDP modelling and an interior-point solver."""

from . import maps
from .maps import LinearMap
from .problem import Block, Constraint, SdpProblem, SdpSolution, dualize, eq, leq, var
from .solver import Options, kkt_residuals, solve
from .slater import SlaterReport, slater_check

__all__ = ["maps", "LinearMap", "Block", "Constraint", "SdpProblem", "SdpSolution", "dualize",
           "eq", "leq", "var", "Options", "solve", "kkt_residuals", "SlaterReport", "slater_check"]
