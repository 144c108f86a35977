import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from dilp.errors import (
    DuplicateEdgeLabelConflict,
    InsufficientRows,
    SchemaMismatch,
    UnknownColumn,
)
from dilp.logic import Atom, Constant
from dilp.tabular import (
    DSC_THRESHOLDS,
    DT_THRESHOLDS,
    FactTable,
    SplitSpec,
    ThresholdRule,
    ThresholdSpec,
    add_negations,
    binarize,
    compute_aggregates,
    facts_arity2,
    group_split,
    identity_thresholds,
    paysim_clean,
    sample_balanced,
    standard_scale,
)


def paysim_frame(rows):
    base = {
        "step": 1,
        "type": "PAYMENT",
        "amount": 100.0,
        "nameOrig": "C1",
        "oldbalanceOrg": 1000.0,
        "newbalanceOrig": 900.0,
        "nameDest": "C2",
        "oldbalanceDest": 50.0,
        "newbalanceDest": 150.0,
        "isFraud": 0,
    }
    records = []
    for r in rows:
        rec = dict(base)
        rec.update(r)
        records.append(rec)
    return pd.DataFrame.from_records(records)


def test_clean_external_destination():
    df = paysim_frame([{"nameDest": "M77", "newbalanceDest": 0.0, "amount": 500.0}])
    out = paysim_clean(df)
    assert out.loc[0, "newbalanceDest"] == 500.0
    assert bool(out.loc[0, "external_dest_flg"])
    assert bool(out.loc[0, "merchant_dest"])


def test_clean_untouched_row():
    df = paysim_frame([{}])
    out = paysim_clean(df)
    assert not bool(out.loc[0, "external_orig_flg"])
    assert not bool(out.loc[0, "external_dest_flg"])
    assert out.loc[0, "oldbalanceOrg"] == 1000.0
    assert out.loc[0, "newbalanceDest"] == 150.0


def test_clean_external_origin():
    df = paysim_frame([{"nameOrig": "M9", "oldbalanceOrg": 0.0, "amount": 250.0}])
    out = paysim_clean(df)
    assert out.loc[0, "oldbalanceOrg"] == 250.0
    assert bool(out.loc[0, "external_orig_flg"])


def test_clean_zero_balance_mule_destination_flagged():
    # the signal the transfer rule relies on: zero destination balance after
    # the transaction marks an external destination even for customer ids
    df = paysim_frame(
        [{"type": "TRANSFER", "nameDest": "C999", "oldbalanceDest": 0.0, "newbalanceDest": 0.0, "isFraud": 1}]
    )
    out = paysim_clean(df)
    assert bool(out.loc[0, "external_dest_flg"])
    assert out.loc[0, "type_TRANSFER"] == 1


def test_clean_missing_column_raises():
    df = paysim_frame([{}]).drop(columns=["amount"])
    with pytest.raises(SchemaMismatch):
        paysim_clean(df)


def test_aggregates_window3():
    df = paysim_frame(
        [
            {"nameDest": "D", "step": 1, "amount": 10.0},
            {"nameDest": "D", "step": 2, "amount": 20.0},
            {"nameDest": "D", "step": 3, "amount": 30.0},
        ]
    )
    out = compute_aggregates(df)
    assert list(out["avg_amount_3"]) == [10.0, 15.0, 20.0]
    assert list(out["max_amount_3"]) == [10.0, 20.0, 30.0]


def test_aggregates_single_transaction():
    df = paysim_frame([{"nameDest": "D", "amount": 42.0}])
    out = compute_aggregates(df)
    assert out.loc[0, "avg_amount_3"] == 42.0
    assert out.loc[0, "avg_amount_7"] == 42.0
    assert out.loc[0, "max_amount_7"] == 42.0


def test_aggregates_window7_covers_last_seven():
    amounts = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
    df = paysim_frame(
        [{"nameDest": "D", "step": i + 1, "amount": a} for i, a in enumerate(amounts)]
    )
    out = compute_aggregates(df)
    # reference: plain trailing-window loop
    expected_mean = [float(np.mean(amounts[max(0, i - 6) : i + 1])) for i in range(8)]
    expected_max = [float(np.max(amounts[max(0, i - 6) : i + 1])) for i in range(8)]
    assert list(out["avg_amount_7"]) == pytest.approx(expected_mean)
    assert list(out["max_amount_7"]) == pytest.approx(expected_max)
    assert out.loc[7, "avg_amount_7"] == pytest.approx(np.mean(amounts[1:]))


def test_aggregates_mixed_destinations_and_order():
    df = paysim_frame(
        [
            {"nameDest": "A", "step": 2, "amount": 5.0},
            {"nameDest": "B", "step": 1, "amount": 7.0},
            {"nameDest": "A", "step": 1, "amount": 3.0},
        ]
    )
    out = compute_aggregates(df)
    # row order preserved; group A ordered by step for the window
    assert list(out.index) == [0, 1, 2]
    assert out.loc[0, "avg_amount_3"] == 4.0  # steps 1,2 of A
    assert out.loc[2, "avg_amount_3"] == 3.0
    assert out.loc[1, "avg_amount_3"] == 7.0


def test_group_split_partitions_groups():
    rows = []
    for g in range(100):
        for _ in range(3):
            rows.append({"nameDest": f"D{g}"})
    df = paysim_frame(rows)
    train, val, test = group_split(df, SplitSpec(seed=11))
    gsets = [set(part["nameDest"]) for part in (train, val, test)]
    assert gsets[0] | gsets[1] | gsets[2] == {f"D{g}" for g in range(100)}
    assert not (gsets[0] & gsets[1] or gsets[0] & gsets[2] or gsets[1] & gsets[2])
    assert abs(len(gsets[2]) - 15) <= 1
    assert abs(len(gsets[1]) - 13) <= 1
    assert abs(len(gsets[0]) - 72) <= 1


def test_group_split_single_group_goes_to_train():
    df = paysim_frame([{"nameDest": "D0"}, {"nameDest": "D0"}])
    train, val, test = group_split(df, SplitSpec(seed=0))
    assert len(train) == 2 and len(val) == 0 and len(test) == 0


def test_group_split_seeded_determinism():
    df = paysim_frame([{"nameDest": f"D{g}"} for g in range(50)])
    a = group_split(df, SplitSpec(seed=3))
    b = group_split(df, SplitSpec(seed=3))
    for x, y in zip(a, b):
        assert list(x.index) == list(y.index)


def test_standard_scale_basic():
    train = pd.DataFrame({"x": [0.0, 2.0]})
    test = pd.DataFrame({"x": [3.0]})
    strain, (stest,), params = standard_scale(train, [test], ["x"])
    assert list(strain["x"]) == [-1.0, 1.0]
    assert stest.loc[0, "x"] == 2.0
    assert params["x"] == (1.0, 1.0)


def test_standard_scale_constant_column_warns():
    train = pd.DataFrame({"x": [5.0, 5.0]})
    with pytest.warns(UserWarning):
        strain, _, params = standard_scale(train, [], ["x"])
    assert list(strain["x"]) == [5.0, 5.0]


def test_standard_scale_idempotent_parameters():
    rng = np.random.default_rng(0)
    train = pd.DataFrame({"x": rng.normal(3, 2, 40)})
    strain, _, params = standard_scale(train, [], ["x"])
    from dilp.tabular import apply_scaler

    again = apply_scaler(train, params)
    assert np.array_equal(strain["x"].to_numpy(), again["x"].to_numpy())


def test_binarize_thresholds_and_drops():
    df = pd.DataFrame(
        {
            "amount": [2.0, -1.0, 1.5],
            "flag": [0, 0, 1],
            "isFraud": [1, 0, 0],
        }
    )
    spec = ThresholdSpec(
        (
            ThresholdRule("amount", 1.297, "greater", "amount_gt"),
            ThresholdRule("flag", 0.5, "greater", "flag_true"),
        )
    )
    table = binarize(df, spec, "isFraud")
    # row 1 has no true fact and is dropped; constants are dense ordinals
    assert [c.symbol for c in table.language.constants] == ["0", "1"]
    amount_gt = table.language.predicate("amount_gt")
    assert Atom(amount_gt, (Constant("0"),)) in table.facts
    assert len(table.examples.positives) == 1
    assert len(table.examples.negatives) == 1
    assert table.row_provenance[Constant("1")] == 2


def test_binarize_unknown_column():
    df = pd.DataFrame({"x": [1.0], "isFraud": [0]})
    spec = ThresholdSpec((ThresholdRule("nope", 0.0, "greater", "p"),))
    with pytest.raises(UnknownColumn):
        binarize(df, spec, "isFraud")


def test_binarize_abcd_identity_row():
    df = pd.DataFrame({"A": [1], "B": [1], "C": [1], "D": [1], "Target": [1]})
    table = binarize(df, identity_thresholds("ABCD"), "Target")
    assert len(table.facts) == 4
    assert len(table.examples.positives) == 1


def test_add_negations_complementarity():
    spec = ThresholdSpec(
        (ThresholdRule("oldbalanceDest", -0.007, "greater", "oldbalanceDest_gt"),)
    )
    full = add_negations(spec)
    names = [r.predicate for r in full]
    assert names == ["oldbalanceDest_gt", "NOT_oldbalanceDest_gt"]
    # exactly at the threshold: the greater fact is false, the negation true
    df = pd.DataFrame({"oldbalanceDest": [-0.007, 0.0], "isFraud": [0, 1]})
    table = binarize(df, full, "isFraud")
    gt = table.language.predicate("oldbalanceDest_gt")
    neg = table.language.predicate("NOT_oldbalanceDest_gt")
    c0, c1 = table.language.constants
    assert Atom(neg, (c0,)) in table.facts and Atom(gt, (c0,)) not in table.facts
    assert Atom(gt, (c1,)) in table.facts and Atom(neg, (c1,)) not in table.facts


def test_add_negations_rejects_nongreater():
    spec = ThresholdSpec((ThresholdRule("x", 0.0, "less_or_equal", "p"),))
    with pytest.raises(ValueError):
        add_negations(spec)


def test_add_negations_empty():
    assert len(add_negations(ThresholdSpec(()))) == 0


@settings(max_examples=25, deadline=None)
@given(
    values=st.lists(
        st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=1, max_size=30
    ),
    threshold=st.floats(min_value=-2, max_value=2, allow_nan=False),
)
def test_binarize_complementarity_fuzz(values, threshold):
    df = pd.DataFrame({"x": values, "isFraud": [0] * len(values)})
    spec = add_negations(ThresholdSpec((ThresholdRule("x", threshold, "greater", "x_gt"),)))
    table = binarize(df, spec, "isFraud")
    # with a negation column every row survives and carries exactly one of the pair
    assert len(table.language.constants) == len(values)
    gt = table.language.predicate("x_gt")
    ng = table.language.predicate("NOT_x_gt")
    for c in table.language.constants:
        has_gt = Atom(gt, (c,)) in table.facts
        has_ng = Atom(ng, (c,)) in table.facts
        assert has_gt != has_ng


def test_binarize_totality_row_accounting():
    rng = np.random.default_rng(5)
    df = pd.DataFrame({"x": rng.normal(size=60), "y": rng.normal(size=60), "isFraud": rng.integers(0, 2, 60)})
    spec = ThresholdSpec(
        (
            ThresholdRule("x", 0.5, "greater", "x_gt"),
            ThresholdRule("y", 0.5, "greater", "y_gt"),
        )
    )
    table = binarize(df, spec, "isFraud")
    survivors = len(table.language.constants)
    dropped = ((df["x"] <= 0.5) & (df["y"] <= 0.5)).sum()
    assert survivors + dropped == 60
    per_constant = {c: 0 for c in table.language.constants}
    for atom in table.facts:
        per_constant[atom.terms[0]] += 1
    assert all(n >= 1 for n in per_constant.values())


def test_sample_balanced_counts():
    df = pd.DataFrame({"isFraud": [1] * 30 + [0] * 300})
    out = sample_balanced(df, 10, 100, seed=4)
    assert int(out["isFraud"].sum()) == 10
    assert len(out) == 110


def test_sample_balanced_insufficient():
    df = pd.DataFrame({"isFraud": [1, 0, 0]})
    with pytest.raises(InsufficientRows):
        sample_balanced(df, 5, 1, seed=0)


def test_facts_arity2_basic():
    table = facts_arity2(
        [
            ("16051", "16086", "Fraud"),
            ("16086", "16014", "Transaction"),
        ],
        target_name="Fraud_Chain",
        positives=[("16086", "16014")],
        negatives=[("16051", "16086")],
    )
    fraud = table.language.predicate("Fraud")
    tx = table.language.predicate("Transaction")
    assert Atom(fraud, (Constant("16051"), Constant("16086"))) in table.facts
    assert Atom(tx, (Constant("16086"), Constant("16014"))) in table.facts
    assert [c.symbol for c in table.language.constants] == ["16051", "16086", "16014"]


def test_facts_arity2_conflict():
    with pytest.raises(DuplicateEdgeLabelConflict):
        facts_arity2(
            [("a", "b", "Fraud", True), ("a", "b", "Fraud", False)],
            target_name="t",
        )


def test_facts_arity2_empty():
    table = facts_arity2(
        [("a", "b", "Fraud", False)], target_name="t", positives=[], negatives=[("a", "b")]
    )
    assert table.facts == frozenset()


def test_fact_table_save_load_roundtrip(tmp_path):
    df = pd.DataFrame({"A": [1, 0], "B": [1, 1], "Target": [1, 0]})
    table = binarize(df, identity_thresholds(["A", "B"]), "Target")
    path = tmp_path / "table.facts"
    table.save(path)
    loaded = FactTable.load(path)
    assert loaded.language == table.language
    assert loaded.facts == table.facts
    assert loaded.examples == table.examples


def test_presets_reference_published_columns():
    dt_names = {r.predicate for r in DT_THRESHOLDS}
    assert {"amount_gt", "oldbalanceDest_gt", "type_TRANSFER", "external_dest"} == dt_names
    dsc_names = {r.predicate for r in DSC_THRESHOLDS}
    assert {"type_TRANSFER", "external_dest", "amount_gt"} == dsc_names


def test_facts_arity2_empty_transactions():
    table = facts_arity2([], target_name="t", positives=[("a", "b")], negatives=[])
    assert table.facts == frozenset()
    assert [c.symbol for c in table.language.constants] == ["a", "b"]


def test_sample_balanced_published_presets():
    df = pd.DataFrame({"isFraud": [1] * 1200 + [0] * 11000})
    even = sample_balanced(df, 100, 100, seed=0)
    assert len(even) == 200 and int(even["isFraud"].sum()) == 100
    skewed = sample_balanced(df, 10, 1000, seed=0)
    assert len(skewed) == 1010 and int(skewed["isFraud"].sum()) == 10


def test_aggregates_max_dominates_mean_and_window1_degenerates():
    rng = np.random.default_rng(12)
    rows = [
        {"nameDest": f"D{rng.integers(0, 5)}", "step": int(rng.integers(1, 20)), "amount": float(rng.uniform(1, 100))}
        for _ in range(80)
    ]
    df = paysim_frame(rows)
    out = compute_aggregates(df, windows=(1, 3, 7))
    assert (out["max_amount_3"] >= out["avg_amount_3"] - 1e-12).all()
    assert (out["max_amount_7"] >= out["avg_amount_7"] - 1e-12).all()
    assert np.allclose(out["avg_amount_1"], out["amount"])
    assert np.allclose(out["max_amount_1"], out["amount"])
