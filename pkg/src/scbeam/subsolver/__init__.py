"""Convex subproblem engine: embedding, assembly and interior-point solve."""
from .conic import INFEASIBLE, NUMERICAL_LIMIT, OPTIMAL, ConeBlock, ConeQP, ConeSettings
from .dc import KAPPA_MIN, DcLayout, anchor_point, build_subproblem, power_groups
from .embedding import Embedding, embed_complex, magnitude_rows, real_part_row
from .problem import (ConvexSubproblem, KktResidual, QuadGroup, SocGroup, SolverSettings,
                      SubproblemSolution, dump, kkt_residual, solve)

__all__ = [
    "OPTIMAL", "INFEASIBLE", "NUMERICAL_LIMIT", "ConeBlock", "ConeQP", "ConeSettings",
    "KAPPA_MIN", "DcLayout", "anchor_point", "build_subproblem", "power_groups",
    "Embedding", "embed_complex", "magnitude_rows", "real_part_row",
    "ConvexSubproblem", "KktResidual", "QuadGroup", "SocGroup", "SolverSettings",
    "SubproblemSolution", "dump", "kkt_residual", "solve",
]
