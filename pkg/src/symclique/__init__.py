"""Inference with symmetric clique potentials."""
from .chain_mrf import ChainInstance, property_messages, viterbi
from .clique_infer import (
    Assignment,
    CliqueProblem,
    Pin,
    alpha_expansion,
    alpha_pass,
    brute_force,
    generalized_alpha_pass,
    icm,
    max_marginals,
)
from .cluster_graph import PropertyConfig, build, decode, objective, run
from .majority_infer import LrConfig, exact_majority, lr_solve, modified_alpha_pass
from .potentials import (
    Entropy,
    LinearMakespan,
    Majority,
    MaxLabelTable,
    Potts,
    SquareMakespan,
)
from .properties import BeforeToken, FirstNonOther, NextLabel, TokenLabel

__all__ = [
    "Assignment", "BeforeToken", "ChainInstance", "CliqueProblem", "Entropy", "FirstNonOther",
    "LinearMakespan", "LrConfig", "Majority", "MaxLabelTable", "NextLabel", "Pin", "Potts",
    "PropertyConfig", "SquareMakespan", "TokenLabel", "alpha_expansion", "alpha_pass",
    "brute_force", "build", "decode", "exact_majority", "generalized_alpha_pass", "icm",
    "lr_solve", "max_marginals", "modified_alpha_pass", "objective", "property_messages",
    "run", "viterbi",
]
