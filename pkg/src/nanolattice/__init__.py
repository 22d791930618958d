"""Simulation and compilation tools for driven nanomechanical Bose-Hubbard lattices."""
from .operators import (CompositeSpace, ModeKind, ModeSpec, OperatorError, SparseOperator,
                        annihilation, creation, embed, identity, number)
from .terms import Term, TermSum, monomial
from .models import (Dissipator, DriveTone, EffectiveParams, LatticeGraph, MasterEquationModel,
                     build_bose_hubbard, build_cross_kerr, build_displaced_coupling,
                     build_effective_hop, build_intermediate_qubit_model, build_kerr_effective,
                     build_pair_with_mixing, build_radiation_pressure)

__version__ = "0.1.0"

__all__ = [
    "CompositeSpace", "ModeKind", "ModeSpec", "OperatorError", "SparseOperator", "annihilation",
    "creation", "embed", "identity", "number", "Term", "TermSum", "monomial", "Dissipator",
    "DriveTone", "EffectiveParams", "LatticeGraph", "MasterEquationModel", "build_bose_hubbard",
    "build_cross_kerr", "build_displaced_coupling", "build_effective_hop",
    "build_intermediate_qubit_model", "build_kerr_effective", "build_pair_with_mixing",
    "build_radiation_pressure",
]
