from itertools import product

import numpy as np
import pytest

from dilp.clausegen import (
    ProgramTemplate,
    RuleTemplate,
    audit_clause,
    build_candidate_space,
    canonical_clause,
    check_extended_circularity,
    clause_poisoned,
    generate_clauses,
)
from dilp.errors import EmptyCandidateSpace, MemoryCapExceeded
from dilp.logic import (
    Atom,
    Clause,
    Constant,
    Language,
    Predicate,
    PredicateKind,
    Program,
    Variable,
)

TARGET = PredicateKind.TARGET
AUX = PredicateKind.AUXILIARY

X0, X1, X2 = Variable(0), Variable(1), Variable(2)


def lang_ab():
    p = Predicate("p", 1, TARGET)
    a, b = Predicate("A", 1), Predicate("B", 1)
    return Language((a, b, p), (Constant("0"), Constant("1")))


def abcd_language():
    ext = tuple(Predicate(n, 1) for n in "ABCD")
    target = Predicate("Target", 1, TARGET)
    aux = (Predicate("pred1", 1, AUX), Predicate("pred2", 1, AUX))
    constants = tuple(Constant(str(i)) for i in range(5))
    return Language(ext + (target,) + aux, constants), target, aux


def graph_language():
    edge = Predicate("edge", 2)
    connected = Predicate("connected", 2, TARGET)
    return Language((edge, connected), (Constant("a"), Constant("b"))), edge, connected


def test_generate_exact_list_arity1_no_exists():
    lang = lang_ab()
    p = lang.predicate("p")
    a, b = lang.predicate("A"), lang.predicate("B")
    clauses = generate_clauses(p, RuleTemplate(0, False), lang)
    head = Atom(p, (X0,))
    expected = {
        Clause(head, (Atom(a, (X0,)), Atom(a, (X0,)))),
        Clause(head, (Atom(a, (X0,)), Atom(b, (X0,)))),
        Clause(head, (Atom(b, (X0,)), Atom(b, (X0,)))),
    }
    assert set(clauses) == expected
    assert len(clauses) == 3


def test_generate_empty_space_raises():
    p = Predicate("p", 1, TARGET)
    lang = Language((p,), (Constant("0"),))
    with pytest.raises(EmptyCandidateSpace):
        generate_clauses(p, RuleTemplate(0, False), lang)


def test_generate_excludes_head_atom_from_body():
    lang = lang_ab()
    p = lang.predicate("p")
    clauses = generate_clauses(p, RuleTemplate(0, True), lang)
    head = Atom(p, (X0,))
    for c in clauses:
        assert head not in c.body


def test_generate_contains_transitive_closure_clauses():
    lang, edge, connected = graph_language()
    clauses = generate_clauses(connected, RuleTemplate(1, True), lang)
    base = canonical_clause(
        Atom(connected, (X0, X1)),
        (Atom(edge, (X0, X1)), Atom(edge, (X0, X1))),
    )
    recursive = canonical_clause(
        Atom(connected, (X0, X1)),
        (Atom(edge, (X0, X2)), Atom(connected, (X2, X1))),
    )
    assert base in clauses
    assert recursive in clauses


def test_generate_deterministic():
    lang, _, connected = graph_language()
    a = generate_clauses(connected, RuleTemplate(1, True), lang)
    b = generate_clauses(connected, RuleTemplate(1, True), lang)
    assert a == b


def test_normalization_no_swap_or_renaming_duplicates():
    lang, _, connected = graph_language()
    clauses = generate_clauses(connected, RuleTemplate(1, True), lang)
    canon = set()
    for c in clauses:
        key = tuple(sorted(str(b) for b in c.body))
        # re-canonicalize both orderings; they must map to the same clause
        assert canonical_clause(c.head, c.body) == c
        assert canonical_clause(c.head, (c.body[1], c.body[0])) == c
        assert key not in canon or c.body[0] == c.body[1]
        canon.add(key)


def test_audit_passes_on_generated_clauses():
    lang, target, aux = abcd_language()
    template = RuleTemplate(0, True)
    for p in (target,) + aux:
        for c in generate_clauses(p, template, lang):
            assert audit_clause(c, template, lang) == []


def test_abcd_per_slot_count():
    # 7 arity-1 predicates give 7 candidate atoms; of the 28 unordered pairs
    # with repetition, the 7 containing the head atom are excluded.
    lang, target, aux = abcd_language()
    for p in (target,) + aux:
        clauses = generate_clauses(p, RuleTemplate(0, True), lang)
        assert len(clauses) == 21


def build_abcd_template(t=5, prevent=False):
    lang, target, aux = abcd_language()
    rt = RuleTemplate(0, True)
    templates = {p: (rt, rt) for p in (target,) + aux}
    return lang, ProgramTemplate(target, aux, templates, t, prevent)


def test_build_candidate_space_counts_and_mask():
    lang, template = build_abcd_template()
    space = build_candidate_space(template, lang)
    assert space.predicates[0].name == "Target"
    assert space.pair_count("Target") == 21 * 21
    # aux clauses mentioning Target(X0) are poisoned: pairs drop accordingly
    assert space.admissible_count("pred1") == 15 * 15
    # the target's own slots are untouched by the default mask
    assert space.admissible_count("Target") == 21 * 21


def test_build_candidate_space_cap_zero():
    lang, template = build_abcd_template()
    with pytest.raises(MemoryCapExceeded) as err:
        build_candidate_space(template, lang, memory_cap_bytes=0)
    assert "exceeds" in str(err.value)


def test_extended_circularity_rejects_reentrant_pattern():
    fraud = Predicate("Fraud", 1, TARGET)
    p1 = Predicate("Predicate1", 1, AUX)
    p2 = Predicate("Predicate2", 1, AUX)
    c_target = Clause(Atom(fraud, (X0,)), (Atom(p1, (X0,)), Atom(p1, (X0,))))
    c_p1 = Clause(Atom(p1, (X0,)), (Atom(fraud, (X0,)), Atom(p2, (X0,))))
    assignment = {fraud: [c_target], p1: [c_p1]}
    assert check_extended_circularity(assignment, fraud) is False


def test_extended_circularity_accepts_chained_solution():
    lang, target, aux = abcd_language()
    a, b, c, d = (lang.predicate(n) for n in "ABCD")
    pred1, pred2 = aux
    clauses = {
        target: [Clause(Atom(target, (X0,)), (Atom(pred1, (X0,)), Atom(c, (X0,))))],
        pred1: [Clause(Atom(pred1, (X0,)), (Atom(pred2, (X0,)), Atom(a, (X0,))))],
        pred2: [Clause(Atom(pred2, (X0,)), (Atom(b, (X0,)), Atom(d, (X0,))))],
    }
    assert check_extended_circularity(clauses, target) is True
    # under prevent_target_recursion this assignment is still fine
    assert check_extended_circularity(clauses, target, True) is True


def test_extended_circularity_trivial_extensional_bodies():
    lang, target, aux = abcd_language()
    a, b = lang.predicate("A"), lang.predicate("B")
    clauses = {
        target: [Clause(Atom(target, (X0,)), (Atom(a, (X0,)), Atom(b, (X0,))))],
    }
    assert check_extended_circularity(clauses, target) is True


def test_extended_circularity_allows_direct_target_recursion():
    fraud = Predicate("Fraud", 2)
    fraudsters = Predicate("Fraudsters", 2, TARGET)
    base = Clause(
        Atom(fraudsters, (X0, X1)),
        (Atom(fraud, (X0, X1)), Atom(fraud, (X0, X1))),
    )
    rec = Clause(
        Atom(fraudsters, (X0, X1)),
        (Atom(fraud, (X2, X1)), Atom(fraudsters, (X2, X0))),
    )
    assert check_extended_circularity({fraudsters: [base, rec]}, fraudsters) is True
    # ... but prevent_target_recursion forbids it
    assert (
        check_extended_circularity({fraudsters: [base, rec]}, fraudsters, True)
        is False
    )


def _tiny_assignment_space():
    a = Predicate("A", 1)
    t = Predicate("t", 1, TARGET)
    p1 = Predicate("p1", 1, AUX)
    lang = Language((a, t, p1), (Constant("0"),))
    rt = RuleTemplate(0, True)
    template = ProgramTemplate(t, (p1,), {t: (rt, rt), p1: (rt, rt)}, 2)
    return lang, template, t, p1


def _brute_force_inadmissible(assignment, target):
    """Reference reimplementation: enumerate dependency paths explicitly."""
    by_pred = {}
    for p, cs in assignment.items():
        by_pred[p] = list(cs)
    # all predicates reachable from the target bodies via any-length paths
    deps = set()
    frontier = {
        b.predicate
        for c in by_pred.get(target, [])
        for b in c.body
        if b.predicate.is_intensional
    }
    while frontier:
        deps |= frontier
        frontier = {
            b.predicate
            for q in frontier
            for c in by_pred.get(q, [])
            for b in c.body
            if b.predicate.is_intensional
        } - deps
    for q in deps:
        for c in by_pred.get(q, []):
            for b in c.body:
                if b.predicate == target and b.terms == c.head.terms:
                    return True
    return False


def test_extended_circularity_brute_force_small_space():
    lang, template, t, p1 = _tiny_assignment_space()
    space = build_candidate_space(template, lang, mask_circular=False)
    slot_t1, slot_t2 = space.slot1["t"], space.slot2["t"]
    slot_p1, slot_p2 = space.slot1["p1"], space.slot2["p1"]
    n_checked = 0
    for jt, kt in product(range(len(slot_t1)), range(len(slot_t2))):
        for jp, kp in product(range(len(slot_p1)), range(len(slot_p2))):
            assignment = {
                t: [slot_t1[jt], slot_t2[kt]],
                p1: [slot_p1[jp], slot_p2[kp]],
            }
            expected = not _brute_force_inadmissible(assignment, t)
            assert check_extended_circularity(assignment, t) is expected
            n_checked += 1
    assert n_checked <= 1000 and n_checked > 0


def test_mask_consistent_with_assignment_check():
    # any pair assignment drawn from the admissible mask passes the full check
    lang, template, t, p1 = _tiny_assignment_space()
    space = build_candidate_space(template, lang, mask_circular=True)
    for name, pred in (("t", t), ("p1", p1)):
        mask = space.pair_mask[name]
        for j, k in zip(*np.nonzero(mask)):
            for name2, pred2 in (("t", t), ("p1", p1)):
                if name2 == name:
                    continue
                mask2 = space.pair_mask[name2]
                j2, k2 = next(zip(*np.nonzero(mask2)))
                assignment = {
                    pred: [space.slot1[name][j], space.slot2[name][k]],
                    pred2: [space.slot1[name2][j2], space.slot2[name2][k2]],
                }
                assert check_extended_circularity(assignment, t) is True


def test_clause_poisoned_flags():
    lang, target, aux = abcd_language()
    pred1 = aux[0]
    a = lang.predicate("A")
    poisoned = Clause(Atom(pred1, (X0,)), (Atom(target, (X0,)), Atom(a, (X0,))))
    clean = Clause(Atom(pred1, (X0,)), (Atom(a, (X0,)), Atom(a, (X0,))))
    assert clause_poisoned(poisoned, target, False) is True
    assert clause_poisoned(clean, target, False) is False
    target_clause = Clause(Atom(target, (X0,)), (Atom(pred1, (X0,)), Atom(a, (X0,))))
    assert clause_poisoned(target_clause, target, False) is False


def test_random_templates_audit(seed=0):
    rng = np.random.default_rng(seed)
    kinds = "ABCDEFG"
    for trial in range(50):
        n_ext = int(rng.integers(1, 4))
        arities = [int(rng.integers(1, 3)) for _ in range(n_ext + 2)]
        ext = tuple(Predicate(kinds[i], arities[i]) for i in range(n_ext))
        target = Predicate("tgt", arities[n_ext], TARGET)
        aux = (Predicate("aux1", arities[n_ext + 1], AUX),)
        lang = Language(ext + (target,) + aux, (Constant("0"), Constant("1")))
        template = RuleTemplate(int(rng.integers(0, 3)), bool(rng.integers(0, 2)))
        for p in (target,) + aux:
            try:
                clauses = generate_clauses(p, template, lang)
            except EmptyCandidateSpace:
                continue
            for c in clauses:
                assert audit_clause(c, template, lang) == []


def test_unmasked_space_admits_reentrant_pair():
    # with masking off, the reentrant target pattern is representable (and
    # selectable); with masking on its pairs have no softmax support
    import numpy as np
    from dilp.inference import WeightSet

    lang, target, aux = abcd_language()
    pred1, pred2 = aux
    rt = RuleTemplate(0, True)
    template = ProgramTemplate(target, aux, {p: (rt, rt) for p in (target,) + aux}, 5)
    reentrant = Program(
        (
            Clause(Atom(target, (X0,)), (Atom(pred1, (X0,)), Atom(pred1, (X0,)))),
            Clause(Atom(pred1, (X0,)), (Atom(target, (X0,)), Atom(pred2, (X0,)))),
            Clause(Atom(pred2, (X0,)), (Atom(lang.predicate("A"), (X0,)), Atom(lang.predicate("A"), (X0,)))),
        )
    )
    unmasked = build_candidate_space(template, lang, mask_circular=False)
    WeightSet.one_hot(unmasked, reentrant)  # representable
    masked = build_candidate_space(template, lang, mask_circular=True)
    with pytest.raises(ValueError):
        WeightSet.one_hot(masked, reentrant)
