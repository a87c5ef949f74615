from .distributions import DistributionError, FiniteDistribution, JointDistribution
from .empirical import Interval, chi_squared_gof, chi_squared_homogeneity, clopper_pearson, tv_estimate, tv_from_samples
from .infotheory import binary_entropy, conditional_entropy, conditional_mi, entropy, joint_entropy, mutual_information
from .privacy import (
    AuditReport,
    BudgetExceeded,
    Divergence,
    audit_mechanism,
    composed_delta,
    dp_audit,
    exact_view_distribution,
    hockey_stick_delta,
    hockey_stick_exact,
    mechanism_distribution,
    summation_delta,
    total_variation,
)
from .reduction import LocalRandomizer, local_randomizer_reduction, mi_diagnostic, own_message_joint

__all__ = [
    "AuditReport",
    "BudgetExceeded",
    "DistributionError",
    "Divergence",
    "FiniteDistribution",
    "Interval",
    "JointDistribution",
    "LocalRandomizer",
    "audit_mechanism",
    "binary_entropy",
    "chi_squared_gof",
    "chi_squared_homogeneity",
    "clopper_pearson",
    "composed_delta",
    "conditional_entropy",
    "conditional_mi",
    "dp_audit",
    "entropy",
    "exact_view_distribution",
    "hockey_stick_delta",
    "hockey_stick_exact",
    "joint_entropy",
    "local_randomizer_reduction",
    "mechanism_distribution",
    "mi_diagnostic",
    "mutual_information",
    "own_message_joint",
    "summation_delta",
    "total_variation",
    "tv_estimate",
    "tv_from_samples",
]
