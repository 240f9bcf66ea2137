"""lieforge: word nets, Solovay-Kitaev refinement, commutator dynamics and relation finding
on small matrix Lie groups."""

__version__ = "0.1.0"

from .errors import (
    ChartError,
    CorrectionError,
    IntegrityError,
    LieForgeError,
    RegimeError,
    SearchError,
    UsageError,
)
from .groups import GROUP_NAMES, GroupSpec, commutator, get_group, random_pair
from .words import ElementTuple, Word, evaluate, parse, reduce, word_jacobian
from .netgen import WordNet, build_base_net, nearest
from .commutator import group_commutator_factor, prepare_weak, root_decompose
from .sk import approximate, build_levels, fit_rate, rate_report
from .proximal import ProximalKind, classify_proximal
from .dynamics import PsiSpec, assemble_psi, run_dynamics
from .relations import (
    RelationCertificate,
    affine_relation_sequence,
    find_relation_commutator_power,
    find_relation_net_newton,
    relation_rate_curve,
    solvable_lift,
)

__all__ = [
    "ChartError",
    "CorrectionError",
    "ElementTuple",
    "GROUP_NAMES",
    "GroupSpec",
    "IntegrityError",
    "LieForgeError",
    "ProximalKind",
    "PsiSpec",
    "RegimeError",
    "RelationCertificate",
    "SearchError",
    "UsageError",
    "Word",
    "WordNet",
    "affine_relation_sequence",
    "approximate",
    "assemble_psi",
    "build_base_net",
    "build_levels",
    "classify_proximal",
    "commutator",
    "evaluate",
    "find_relation_commutator_power",
    "find_relation_net_newton",
    "fit_rate",
    "get_group",
    "group_commutator_factor",
    "nearest",
    "parse",
    "prepare_weak",
    "random_pair",
    "rate_report",
    "reduce",
    "relation_rate_curve",
    "root_decompose",
    "run_dynamics",
    "solvable_lift",
    "word_jacobian",
]
