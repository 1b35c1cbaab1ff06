"""The running example shared by the demo scripts."""

import numpy as np

from cfbounds import ENDOGENOUS, EXOGENOUS, Pscm, StructuralEquation, Variable


def chain_pair() -> Pscm:
    """V1 copies a binary root; V2's response to V1 is selected by a 4-state
    root (always 0 / copy / negate / always 1)."""
    variables = (
        Variable(0, "U1", 2, EXOGENOUS),
        Variable(1, "U2", 4, EXOGENOUS),
        Variable(2, "V1", 2, ENDOGENOUS),
        Variable(3, "V2", 2, ENDOGENOUS),
    )
    equations = (
        StructuralEquation(2, (0,), np.array([0, 1])),
        StructuralEquation(3, (2, 1), np.array([[0, 0, 1, 1], [0, 1, 0, 1]])),
    )
    return Pscm(variables, equations)
