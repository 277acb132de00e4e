from .kv import DifferenceFunctional, kv_inequality_check
from .ldp import ldp_limit, ldp_rate, legendre_rate, moment_oracle, moment_ratio_table, tail_bound_check
from .small_system import (
    build_small_system,
    generator_symmetry_defect,
    h_minus_one_norm,
    psi_conditional,
    spectral_gap,
    verify_gap_bound,
)
