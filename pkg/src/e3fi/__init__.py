"""First integrals of Newtonian potentials in three-dimensional Euclidean space."""

from .catalog import CatalogEntry, EntryReport, load_catalog, select, verify_entry
from .classify import ClassificationResult, classify, jacobian_rank
from .discovery import DiscoveryResult, assemble_system, discover, nullspace
from .expr import Expr, ParseError, diff, evaluate, parse, to_string
from .geometry import KtParams, KvParams, SymTensorField, VectorField, general_kt, is_killing_tensor, reducible_vector, sym_gradient
from .integrator import integrate
from .poisson import bracket, hamiltonian, total_time_derivative
from .qfi import build_I3, build_I10, build_I11, build_I20, family_residuals, reconstruct_G

__all__ = [
    "CatalogEntry", "ClassificationResult", "DiscoveryResult", "EntryReport", "Expr", "KtParams", "KvParams",
    "ParseError", "SymTensorField", "VectorField", "assemble_system", "bracket", "build_I10", "build_I11",
    "build_I20", "build_I3", "classify", "diff", "discover", "evaluate", "family_residuals", "general_kt",
    "hamiltonian", "integrate", "is_killing_tensor", "jacobian_rank", "load_catalog", "nullspace", "parse",
    "reconstruct_G", "reducible_vector", "select", "sym_gradient", "to_string", "total_time_derivative",
    "verify_entry",
]
