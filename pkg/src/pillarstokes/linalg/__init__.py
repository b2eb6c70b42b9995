"""Sparse direct solves, flexible GMRES and pencil eigen-iterations."""
from .eigen import EigenConvergenceError, EigenResult, eig_largest_pencil, eig_smallest_pencil
from .krylov import KrylovConfig, SolveReport, StopReason, fgmres
from .lu import LuFactorization, SingularMatrixError, lu_factor, lu_solve
from .sparse import as_csr, coo_to_csr, read_matrix_market, write_matrix_market

__all__ = [
    "EigenConvergenceError",
    "EigenResult",
    "KrylovConfig",
    "LuFactorization",
    "SingularMatrixError",
    "SolveReport",
    "StopReason",
    "as_csr",
    "coo_to_csr",
    "eig_largest_pencil",
    "eig_smallest_pencil",
    "fgmres",
    "lu_factor",
    "lu_solve",
    "read_matrix_market",
    "write_matrix_market",
]
