"""Taylor-Hood finite elements for Stokes flow on triangular meshes."""
from .assembly import (
    AssembledStokes,
    BcKind,
    BcSetup,
    DegenerateElementError,
    apply_bcs,
    assemble,
    graddiv_operator,
    setup_a,
    setup_b,
)
from .dofmap import DofMap, ScalarSpace, build_dofmap
from .elements import TAYLOR_HOOD, TAYLOR_HOOD_P3, ElementPair
from .errors import ErrorReport, elevate, errors_against_exact, evaluate_errors, export_fields

__all__ = [
    "AssembledStokes",
    "BcKind",
    "BcSetup",
    "DegenerateElementError",
    "DofMap",
    "ElementPair",
    "ErrorReport",
    "ScalarSpace",
    "TAYLOR_HOOD",
    "TAYLOR_HOOD_P3",
    "apply_bcs",
    "assemble",
    "build_dofmap",
    "elevate",
    "errors_against_exact",
    "evaluate_errors",
    "export_fields",
    "graddiv_operator",
    "setup_a",
    "setup_b",
]
