"""Legendre-Gauss-Lobatto collocation for optimal control, with costate recovery."""

from .basis import NodeFamily, QuadratureRule, make_rule
from .matrices import CollocationOperators, lgl_operators
from .nlp import SolverOptions, solve_equality_nlp
from .solve import SolveArtifacts, solve_ocp
from .transcription import Horizon, Mesh, OcpProblem, Scheme, TranscribedNlp

__all__ = [
    "NodeFamily", "QuadratureRule", "make_rule", "CollocationOperators", "lgl_operators",
    "SolverOptions", "solve_equality_nlp", "SolveArtifacts", "solve_ocp",
    "Horizon", "Mesh", "OcpProblem", "Scheme", "TranscribedNlp",
]
