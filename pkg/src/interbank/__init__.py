"""Interbank clearing with mark-to-market default contagion on multinomial trees."""

from .clearing_multi import (
    ClearingSolutionMulti,
    RebalancingStrategy,
    capital_ratio_bound,
    clear_multi,
    clear_multi_dpp,
    eval_strategy,
)
from .clearing_single import (
    ClearingSolutionT,
    VolDecomposition,
    clear_maximal_dpp,
    clear_maximal_picard,
    clear_minimal,
    enumerate_solutions_small,
    static_clearing,
    vol_decompose,
)
from .errors import CertificationError, ConfigError, ConvergenceError, GuardViolation, NetworkError
from .hpa import AccountingMode, DominanceReport, clear_hpa_multi, clear_hpa_single, compare_accounting, hpa_survival
from .network import NetworkSpec, split_obligations, validate
from .oracle import certify_multi, enumerate_fixed_points_single, lattice_extremes
from .term_structure import YieldCurve, curve_from_probabilities, probabilities_from_curve, shape_diagnostics
from .tree import AssetField, TreeSpace, build_tree, grow_assets, make_perturbations, vol_matrix

__version__ = "0.1.0"

__all__ = [
    "AccountingMode",
    "AssetField",
    "CertificationError",
    "ClearingSolutionMulti",
    "ClearingSolutionT",
    "ConfigError",
    "ConvergenceError",
    "DominanceReport",
    "GuardViolation",
    "NetworkError",
    "NetworkSpec",
    "RebalancingStrategy",
    "TreeSpace",
    "VolDecomposition",
    "YieldCurve",
    "build_tree",
    "capital_ratio_bound",
    "certify_multi",
    "clear_hpa_multi",
    "clear_hpa_single",
    "clear_maximal_dpp",
    "clear_maximal_picard",
    "clear_minimal",
    "clear_multi",
    "clear_multi_dpp",
    "compare_accounting",
    "curve_from_probabilities",
    "enumerate_fixed_points_single",
    "enumerate_solutions_small",
    "eval_strategy",
    "grow_assets",
    "hpa_survival",
    "lattice_extremes",
    "make_perturbations",
    "probabilities_from_curve",
    "shape_diagnostics",
    "split_obligations",
    "static_clearing",
    "validate",
    "vol_decompose",
    "vol_matrix",
]
