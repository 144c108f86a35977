"""Differentiable inductive logic programming over binarized tabular data."""

from .clausegen import ProgramTemplate, RuleTemplate, build_candidate_space
from .emit import rephrase, sql_equivalence_check, to_sql
from .logic import (
    Atom,
    Clause,
    Constant,
    ExampleSet,
    Language,
    Predicate,
    PredicateKind,
    Program,
    Variable,
    crisp_consequence,
    format_program,
    parse_program,
)
from .metrics import MetricsReport, confusion, report
from .tabular import FactTable, ThresholdRule, ThresholdSpec, add_negations, binarize
from .trainer import TrainConfig, TrainedModel, evaluate, extract_program, train

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "Clause",
    "Constant",
    "ExampleSet",
    "FactTable",
    "Language",
    "MetricsReport",
    "Predicate",
    "PredicateKind",
    "Program",
    "ProgramTemplate",
    "RuleTemplate",
    "ThresholdRule",
    "ThresholdSpec",
    "TrainConfig",
    "TrainedModel",
    "Variable",
    "add_negations",
    "binarize",
    "build_candidate_space",
    "confusion",
    "crisp_consequence",
    "evaluate",
    "extract_program",
    "format_program",
    "parse_program",
    "rephrase",
    "report",
    "sql_equivalence_check",
    "to_sql",
    "train",
]
