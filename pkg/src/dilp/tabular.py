"""Transaction tables to background facts.

Covers the whole data path: transaction-table cleaning with balance
imputation flags, rolling aggregates per destination, group-aware splits,
standard scaling, class-balanced sampling, threshold binarization with
optional negation columns, and sender/receiver fact construction for
arity-2 relations.
"""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DuplicateEdgeLabelConflict,
    InsufficientRows,
    SchemaMismatch,
    UnknownColumn,
)
from .logic import (
    Atom,
    Constant,
    ExampleSet,
    Language,
    Predicate,
    PredicateKind,
)

log = logging.getLogger(__name__)

PAYSIM_COLUMNS = (
    "step",
    "type",
    "amount",
    "nameOrig",
    "oldbalanceOrg",
    "newbalanceOrig",
    "nameDest",
    "oldbalanceDest",
    "newbalanceDest",
    "isFraud",
)

SCALED_COLUMNS = (
    "amount",
    "oldbalanceOrg",
    "newbalanceOrig",
    "oldbalanceDest",
    "newbalanceDest",
    "avg_amount_3",
    "max_amount_3",
    "avg_amount_7",
    "max_amount_7",
)


@dataclass(frozen=True)
class ThresholdRule:
    """One binarization column: truth of ``column <op> threshold``."""

    column: str
    threshold: float
    direction: str  # "greater" or "less_or_equal"
    predicate: str

    def __post_init__(self):
        if self.direction not in ("greater", "less_or_equal"):
            raise ValueError(f"bad direction {self.direction!r}")

    def test(self, values: pd.Series) -> np.ndarray:
        if self.direction == "greater":
            return (values > self.threshold).to_numpy()
        return (values <= self.threshold).to_numpy()


@dataclass(frozen=True)
class ThresholdSpec:
    rules: tuple[ThresholdRule, ...]

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        names = [r.predicate for r in self.rules]
        if len(set(names)) != len(names):
            raise ValueError("threshold predicate names must be unique")

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)


def identity_thresholds(columns) -> ThresholdSpec:
    """Boolean 0/1 columns binarized by identity (strictly above one half)."""
    return ThresholdSpec(tuple(ThresholdRule(c, 0.5, "greater", c) for c in columns))


# Published threshold values from the decision-tree and symbolic-classifier
# baselines; both sets are configuration inputs, extendable per experiment.
DT_THRESHOLDS = ThresholdSpec(
    (
        ThresholdRule("amount", 1.297, "greater", "amount_gt"),
        ThresholdRule("oldbalanceDest", -0.007, "greater", "oldbalanceDest_gt"),
        ThresholdRule("type_TRANSFER", 0.5, "greater", "type_TRANSFER"),
        ThresholdRule("external_dest_flg", 0.5, "greater", "external_dest"),
    )
)

DSC_THRESHOLDS = ThresholdSpec(
    (
        ThresholdRule("amount", 1.297, "greater", "amount_gt"),
        ThresholdRule("type_TRANSFER", 0.5, "greater", "type_TRANSFER"),
        ThresholdRule("external_dest_flg", 0.5, "greater", "external_dest"),
    )
)

THRESHOLD_PRESETS = {"dt": DT_THRESHOLDS, "dsc": DSC_THRESHOLDS}


def add_negations(spec: ThresholdSpec) -> ThresholdSpec:
    """Append, for each greater-rule, its complement as a NOT_ predicate."""
    for rule in spec:
        if rule.direction != "greater":
            raise ValueError("negations can only be added to greater-direction rules")
    negated = tuple(
        ThresholdRule(r.column, r.threshold, "less_or_equal", f"NOT_{r.predicate}")
        for r in spec
    )
    return ThresholdSpec(spec.rules + negated)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.85
    test_fraction: float = 0.15
    validation_fraction: float = 0.15
    group_key: str = "nameDest"
    seed: int = 0

    def __post_init__(self):
        for name in ("train_fraction", "test_fraction", "validation_fraction"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if abs(self.train_fraction + self.test_fraction - 1.0) > 1e-9:
            raise ValueError("train and test fractions must sum to 1")


@dataclass
class FactTable:
    """Binarized dataset: language, true ground facts, labeled examples."""

    language: Language
    facts: frozenset[Atom]
    examples: ExampleSet
    row_provenance: dict[Constant, object] = field(default_factory=dict)

    def __post_init__(self):
        self.facts = frozenset(self.facts)
        universe = set(self.language.constants)
        names = {p.name for p in self.language.predicates}
        for atom in self.facts:
            if atom.predicate.is_intensional:
                raise ValueError(f"fact {atom} is not extensional")
            self._check(atom, universe, names)
        for atom in self.examples.positives + self.examples.negatives:
            self._check(atom, universe, names)

    @staticmethod
    def _check(atom: Atom, universe, names):
        if atom.predicate.name not in names:
            raise ValueError(f"{atom} uses a predicate outside the language")
        for term in atom.terms:
            if term not in universe:
                raise ValueError(f"{atom} uses constant {term} outside the language")

    def save(self, path) -> None:
        lines = ["[predicates]"]
        for p in self.language.predicates:
            lines.append(f"{p.name}/{p.arity} {p.kind.value}")
        lines.append("[constants]")
        lines.extend(c.symbol for c in self.language.constants)
        lines.append("[facts]")
        lines.extend(str(a) for a in sorted(self.facts, key=str))
        lines.append("[examples]")
        lines.extend(f"+{a}" for a in self.examples.positives)
        lines.extend(f"-{a}" for a in self.examples.negatives)
        target = Path(path)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_text("\n".join(lines) + "\n")
        os.replace(tmp, target)

    @classmethod
    def load(cls, path) -> "FactTable":
        sections: dict[str, list[str]] = {}
        current = None
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                sections[current] = []
                continue
            if current is None:
                raise ValueError(f"content before first section in {path}")
            sections[current].append(line)
        try:
            pred_lines = sections["predicates"]
            const_lines = sections["constants"]
            fact_lines = sections.get("facts", [])
            example_lines = sections.get("examples", [])
        except KeyError as missing:
            raise ValueError(f"fact table file {path} lacks section {missing}") from None

        predicates = []
        for line in pred_lines:
            sig, kind = line.split()
            name, arity = sig.split("/")
            predicates.append(Predicate(name, int(arity), PredicateKind(kind)))
        language = Language(tuple(predicates), tuple(Constant(s) for s in const_lines))

        def parse_atom(text: str) -> Atom:
            name, rest = text.split("(", 1)
            args = rest.rstrip(")").split(",")
            args = [a.strip().strip("'") for a in args]
            return Atom(language.predicate(name.strip()), tuple(Constant(a) for a in args))

        facts = frozenset(parse_atom(line) for line in fact_lines)
        positives, negatives = [], []
        for line in example_lines:
            sign, atom_text = line[0], line[1:]
            if sign == "+":
                positives.append(parse_atom(atom_text))
            elif sign in "-−":
                negatives.append(parse_atom(atom_text))
            else:
                raise ValueError(f"example line must start with + or -: {line!r}")
        return cls(language, facts, ExampleSet(tuple(positives), tuple(negatives)))


def load_paysim_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = [c for c in PAYSIM_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaMismatch(f"missing transaction columns: {missing}")
    return df


def paysim_clean(df: pd.DataFrame) -> pd.DataFrame:
    """Impute zero balances and add merchant/external flags plus type booleans.

    Zero-balance counterparties (merchant-side transactions in the source
    data) get the transaction amount imputed: a zero origin balance before
    the transaction marks an external origin, a zero destination balance
    after it marks an external destination.
    """
    missing = [c for c in PAYSIM_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaMismatch(f"missing transaction columns: {missing}")
    out = df.copy()
    out["merchant_orig"] = out["nameOrig"].astype(str).str.startswith("M")
    out["merchant_dest"] = out["nameDest"].astype(str).str.startswith("M")
    orig_zero = out["oldbalanceOrg"] == 0
    dest_zero = out["newbalanceDest"] == 0
    out["external_orig_flg"] = orig_zero
    out["external_dest_flg"] = dest_zero
    out.loc[orig_zero, "oldbalanceOrg"] = out.loc[orig_zero, "amount"]
    out.loc[dest_zero, "newbalanceDest"] = out.loc[dest_zero, "amount"]
    for type_name in ("TRANSFER", "CASH_OUT", "PAYMENT", "CASH_IN", "DEBIT"):
        out[f"type_{type_name}"] = (out["type"] == type_name).astype(int)
    return out


def compute_aggregates(df: pd.DataFrame, windows=(3, 7)) -> pd.DataFrame:
    """Trailing rolling mean and max of amount per destination.

    Windows include the current transaction and shrink at the start of each
    group; ties in ``step`` keep the original row order.
    """
    out = df.copy()
    original_order = out.index
    out = out.sort_values(["nameDest", "step"], kind="stable")
    grouped = out.groupby("nameDest", sort=False)["amount"]
    for w in windows:
        rolled_mean = grouped.rolling(w, min_periods=1).mean().reset_index(level=0, drop=True)
        rolled_max = grouped.rolling(w, min_periods=1).max().reset_index(level=0, drop=True)
        out[f"avg_amount_{w}"] = rolled_mean
        out[f"max_amount_{w}"] = rolled_max
    return out.loc[original_order]


def group_split(df: pd.DataFrame, spec: SplitSpec) -> tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    """Split rows into (train, validation, test) keeping groups whole.

    The test set takes ``test_fraction`` of the groups; the validation set
    takes ``validation_fraction`` of the remaining (training) groups.
    """
    if spec.group_key not in df.columns:
        raise UnknownColumn(f"group key {spec.group_key!r} not in table")
    groups = np.sort(df[spec.group_key].astype(str).unique())
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(len(groups))
    n_test = int(round(len(groups) * spec.test_fraction))
    n_val = int(round((len(groups) - n_test) * spec.validation_fraction))
    test_groups = set(groups[perm[:n_test]])
    val_groups = set(groups[perm[n_test : n_test + n_val]])
    keys = df[spec.group_key].astype(str)
    in_test = keys.isin(test_groups)
    in_val = keys.isin(val_groups)
    return (
        df[~in_test & ~in_val],
        df[in_val],
        df[in_test],
    )


def standard_scale(
    train: pd.DataFrame,
    others: list[pd.DataFrame],
    columns,
) -> tuple[pd.DataFrame, list[pd.DataFrame], dict[str, tuple[float, float]]]:
    """Center/scale columns by train-set mean and population std.

    The same parameters transform every other table.  Zero-variance columns
    pass through unchanged, with a warning.
    """
    params: dict[str, tuple[float, float]] = {}
    for col in columns:
        if col not in train.columns:
            raise UnknownColumn(f"column {col!r} not in training table")
        mean = float(train[col].mean())
        std = float(train[col].std(ddof=0))
        if std == 0.0:
            warnings.warn(f"column {col!r} has zero variance; left unscaled")
        params[col] = (mean, std)

    def apply(table: pd.DataFrame) -> pd.DataFrame:
        out = table.copy()
        for col, (mean, std) in params.items():
            if std == 0.0:
                continue
            out[col] = (out[col] - mean) / std
        return out

    return apply(train), [apply(t) for t in others], params


def apply_scaler(table: pd.DataFrame, params: dict[str, tuple[float, float]]) -> pd.DataFrame:
    out = table.copy()
    for col, (mean, std) in params.items():
        if std == 0.0:
            continue
        out[col] = (out[col] - mean) / std
    return out


def sample_balanced(
    df: pd.DataFrame,
    n_pos: int,
    n_neg: int,
    seed: int,
    label_column: str = "isFraud",
) -> pd.DataFrame:
    """Seeded uniform class sample without replacement, original row order."""
    if label_column not in df.columns:
        raise UnknownColumn(f"label column {label_column!r} not in table")
    labels = df[label_column].astype(int)
    pos_positions = np.flatnonzero(labels.to_numpy() == 1)
    neg_positions = np.flatnonzero(labels.to_numpy() == 0)
    if len(pos_positions) < n_pos:
        raise InsufficientRows(
            f"asked for {n_pos} positive rows, only {len(pos_positions)} available"
        )
    if len(neg_positions) < n_neg:
        raise InsufficientRows(
            f"asked for {n_neg} negative rows, only {len(neg_positions)} available"
        )
    rng = np.random.default_rng(seed)
    chosen = np.concatenate(
        [
            rng.choice(pos_positions, size=n_pos, replace=False),
            rng.choice(neg_positions, size=n_neg, replace=False),
        ]
    )
    chosen.sort()
    return df.iloc[chosen]


def threshold_matrix(df: pd.DataFrame, spec: ThresholdSpec) -> np.ndarray:
    """Boolean matrix (rows x rules) of threshold tests."""
    for rule in spec:
        if rule.column not in df.columns:
            raise UnknownColumn(f"threshold column {rule.column!r} not in table")
    return np.column_stack([rule.test(df[rule.column]) for rule in spec])


def binarize(
    df: pd.DataFrame,
    spec: ThresholdSpec,
    target_column: str,
    target_name: str | None = None,
) -> FactTable:
    """Threshold columns into unary facts over row-ordinal constants.

    Rows with no true fact are dropped; constants are assigned densely after
    dropping, and the original row ids are kept in ``row_provenance``.
    """
    if target_column not in df.columns:
        raise UnknownColumn(f"target column {target_column!r} not in table")
    truth = threshold_matrix(df, spec)
    keep = truth.any(axis=1)
    survivors = truth[keep]
    labels = df[target_column].to_numpy()[keep].astype(bool)
    original_ids = df.index.to_numpy()[keep]
    dropped = int(len(df) - keep.sum())
    if dropped:
        log.info("dropped %d all-false rows of %d", dropped, len(df))

    constants = tuple(Constant(str(i)) for i in range(int(keep.sum())))
    predicates = tuple(Predicate(rule.predicate, 1) for rule in spec)
    target = Predicate(target_name or target_column, 1, PredicateKind.TARGET)
    language = Language(predicates + (target,), constants)

    facts = set()
    for j, pred in enumerate(predicates):
        for i in np.flatnonzero(survivors[:, j]):
            facts.add(Atom(pred, (constants[i],)))
    positives = tuple(Atom(target, (constants[i],)) for i in np.flatnonzero(labels))
    negatives = tuple(Atom(target, (constants[i],)) for i in np.flatnonzero(~labels))
    provenance = {constants[i]: original_ids[i] for i in range(len(constants))}
    return FactTable(
        language,
        frozenset(facts),
        ExampleSet(positives, negatives),
        provenance,
    )


def facts_arity2(
    transactions,
    relation_order=None,
    target_name: str = "target",
    positives=(),
    negatives=(),
) -> FactTable:
    """Facts over agent-id constants from labeled transactions.

    ``transactions`` holds (source, destination, relation) triples, with an
    optional fourth truth element (default True); asserting the same triple
    both true and false raises.  Examples are target-relation (source,
    destination) pairs supplied by the scenario; agents appearing only in
    examples still enter the constant universe.
    """
    asserted: dict[tuple[str, str, str], bool] = {}
    agents: list[str] = []
    relations: list[str] = []
    for entry in transactions:
        if len(entry) == 3:
            src, dst, relation = entry
            truth = True
        else:
            src, dst, relation, truth = entry
        src, dst = str(src), str(dst)
        key = (src, dst, relation)
        if key in asserted and asserted[key] != bool(truth):
            raise DuplicateEdgeLabelConflict(
                f"edge {relation}({src},{dst}) asserted both true and false"
            )
        asserted[key] = bool(truth)
        for agent in (src, dst):
            if agent not in agents:
                agents.append(agent)
        if relation not in relations:
            relations.append(relation)
    for pair in tuple(positives) + tuple(negatives):
        for agent in pair:
            if str(agent) not in agents:
                agents.append(str(agent))
    if not agents:
        raise ValueError("no agents: transactions and examples are all empty")
    if relation_order:
        for relation in relation_order:
            if relation not in relations:
                relations.append(relation)
        relations.sort(key=lambda r: relation_order.index(r) if r in relation_order else len(relation_order))

    constants = tuple(Constant(a) for a in agents)
    rel_preds = {r: Predicate(r, 2) for r in relations}
    target = Predicate(target_name, 2, PredicateKind.TARGET)
    language = Language(tuple(rel_preds.values()) + (target,), constants)
    facts = frozenset(
        Atom(rel_preds[rel], (Constant(src), Constant(dst)))
        for (src, dst, rel), truth in asserted.items()
        if truth
    )
    to_atom = lambda pair: Atom(target, (Constant(str(pair[0])), Constant(str(pair[1]))))
    examples = ExampleSet(
        tuple(to_atom(p) for p in positives),
        tuple(to_atom(n) for n in negatives),
    )
    return FactTable(language, facts, examples, {})
