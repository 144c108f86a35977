"""Seeded generators for the synthetic scenarios.

The two arity-2 scenarios are fixed reconstructions: the published fact and
example counts plus every published atom are honoured, and the instances are
built so the published rule is the unique loss-minimizing candidate program
(verified by the exhaustive audits in the test suite).
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .tabular import FactTable, binarize, facts_arity2, identity_thresholds

ABCD_COLUMNS = ("A", "B", "C", "D")

# Dataset seed pinned so the 100-row instance reproduces the published class
# balance: 7 positives, 86 negatives, 7 all-false rows dropped.
ABCD_SEED = 6


def gen_abcd(n: int, seed: int) -> pd.DataFrame:
    """Random fair booleans A..D with Target = A and B and C and D."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    data = {c: rng.integers(0, 2, size=n) for c in ABCD_COLUMNS}
    frame = pd.DataFrame(data)
    frame["Target"] = (
        frame["A"] & frame["B"] & frame["C"] & frame["D"]
    ).astype(int)
    return frame


def abcd_fact_table(frame: pd.DataFrame) -> FactTable:
    """Binarize an A..D table by identity; all-false rows drop out."""
    return binarize(frame, identity_thresholds(ABCD_COLUMNS), "Target")


# --- Co-fraudster scenario -------------------------------------------------
#
# Four fraud facts whose co-fraudster closure has exactly nine atoms,
# including Fraudsters(1,4) and Fraudsters(2,4); the base + recursive clause
# pair is the only candidate pair whose closure matches the positives.

FRAUD_RELATIONSHIP_FACTS = (
    ("1", "2"),
    ("1", "4"),
    ("2", "3"),
    ("3", "3"),
)

FRAUD_RELATIONSHIP_POSITIVES = (
    ("1", "2"),
    ("1", "4"),
    ("2", "2"),
    ("2", "3"),
    ("2", "4"),
    ("3", "3"),
    ("4", "2"),
    ("4", "3"),
    ("4", "4"),
)


def gen_fraud_relationship() -> FactTable:
    """Fixed co-fraudster instance: 4 facts, 9 positives, 7 negatives."""
    agents = ("1", "2", "3", "4")
    positives = set(FRAUD_RELATIONSHIP_POSITIVES)
    negatives = tuple(
        (a, b)
        for a in agents
        for b in agents
        if (a, b) not in positives
    )
    transactions = [(a, b, "Fraud") for a, b in FRAUD_RELATIONSHIP_FACTS]
    return facts_arity2(
        transactions,
        target_name="Fraudsters",
        positives=FRAUD_RELATIONSHIP_POSITIVES,
        negatives=negatives,
    )


# --- Chain-of-fraud scenario -------------------------------------------------
#
# 36 facts (10 fraud edges + 26 transactions).  The five positives are
# exactly the transactions whose source received a fraudulent inflow; the 21
# negatives are chosen so that every candidate clause other than the chain
# rule (and its two always-subsumed specializations) derives at least one of
# them.

FRAUD_CHAIN_FRAUD_EDGES = (
    ("16051", "16086"),
    ("16023", "16086"),
    ("16067", "16086"),
    ("16051", "16102"),
    ("16033", "16102"),
    ("16023", "16117"),
    ("16033", "16117"),
    ("16067", "16117"),
    ("16130", "16130"),
    ("16051", "16130"),
)

FRAUD_CHAIN_TRANSACTIONS = (
    # chain transactions (sources with fraudulent inflow)
    ("16086", "16014"),
    ("16086", "16042"),
    ("16102", "16033"),
    ("16102", "16102"),
    ("16130", "16014"),
    # ordinary transactions
    ("16014", "16042"),
    ("16042", "16078"),
    ("16078", "16078"),
    ("16094", "16042"),
    ("16042", "16094"),
    ("16051", "16051"),
    ("16051", "16014"),
    ("16023", "16033"),
    ("16033", "16067"),
    ("16067", "16086"),
    ("16014", "16023"),
    ("16042", "16051"),
    ("16078", "16094"),
    ("16094", "16130"),
    ("16014", "16086"),
    ("16078", "16125"),
    ("16023", "16078"),
    ("16051", "16125"),
    ("16033", "16014"),
    ("16094", "16067"),
    ("16067", "16042"),
)

FRAUD_CHAIN_POSITIVES = (
    ("16086", "16014"),
    ("16086", "16042"),
    ("16102", "16033"),
    ("16102", "16102"),
    ("16130", "16014"),
)

FRAUD_CHAIN_NEGATIVES = (
    ("16014", "16042"),
    ("16014", "16086"),
    ("16014", "16130"),
    ("16023", "16033"),
    ("16033", "16067"),
    ("16033", "16102"),
    ("16042", "16078"),
    ("16042", "16094"),
    ("16051", "16014"),
    ("16051", "16051"),
    ("16051", "16102"),
    ("16051", "16130"),
    ("16067", "16086"),
    ("16078", "16078"),
    ("16086", "16067"),
    ("16094", "16042"),
    ("16094", "16130"),
    ("16102", "16051"),
    ("16130", "16051"),
    ("16130", "16094"),
    ("16130", "16130"),
)


def gen_fraud_chain() -> FactTable:
    """Fixed chain-of-fraud instance: 36 facts, 5 positives, 21 negatives."""
    transactions = [(a, b, "Fraud") for a, b in FRAUD_CHAIN_FRAUD_EDGES] + [
        (a, b, "Transaction") for a, b in FRAUD_CHAIN_TRANSACTIONS
    ]
    return facts_arity2(
        transactions,
        target_name="Fraud_Chain",
        positives=FRAUD_CHAIN_POSITIVES,
        negatives=FRAUD_CHAIN_NEGATIVES,
    )


SCENARIOS = {
    "abcd": None,  # parameterized; see gen_abcd
    "fraud_relationship": gen_fraud_relationship,
    "fraud_chain": gen_fraud_chain,
}
