"""Automated utility-specification search for discrete choice models.

A Deep Q-Network agent builds multinomial-logit specifications step by
step (add / change / terminate), an estimation environment fits each
candidate by maximum likelihood, and a configurable reward concentrates
the search on well-fitting, parsimonious, behaviourally plausible models.
"""

from .agent import AgentConfig, DqnAgent
from .dataset import ChoiceDataset, CsvSchema, load_wide_csv, save_wide_csv, split_holdout
from .estimator import (
    EstimationOutcome,
    OptimizerSettings,
    UtilityDesign,
    build_design,
    estimate,
    null_log_likelihood,
)
from .reward import BehaviouralConstraint, RewardConfig, RewardEngine
from .search import RunConfig, SearchResult, pareto_front, run_search, summarise
from .space import (
    ActionDescriptor,
    AscTerm,
    AttrTerm,
    ModellingSpace,
    ModelSpec,
    canonical_key,
    enumerate_actions,
    space_size,
)
from .synthetic import TrueCase, case_catalogue, generate

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "ActionDescriptor",
    "AscTerm",
    "AttrTerm",
    "BehaviouralConstraint",
    "ChoiceDataset",
    "CsvSchema",
    "DqnAgent",
    "EstimationOutcome",
    "ModellingSpace",
    "ModelSpec",
    "OptimizerSettings",
    "RewardConfig",
    "RewardEngine",
    "RunConfig",
    "SearchResult",
    "TrueCase",
    "UtilityDesign",
    "build_design",
    "canonical_key",
    "case_catalogue",
    "enumerate_actions",
    "estimate",
    "generate",
    "load_wide_csv",
    "null_log_likelihood",
    "pareto_front",
    "run_search",
    "save_wide_csv",
    "space_size",
    "split_holdout",
    "summarise",
]
