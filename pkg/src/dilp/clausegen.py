"""Candidate clause generation from rule templates.

Enumerates, per intensional predicate, every definite clause admitted by the
language bias; normalizes away body-order and variable-renaming duplicates;
and masks clause pairs that would re-enter the target predicate through an
auxiliary definition.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement, product
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyCandidateSpace, MemoryCapExceeded
from .logic import (
    Atom,
    Clause,
    Language,
    Predicate,
    Program,
    Variable,
    free_variables,
)

DEFAULT_MEMORY_CAP_BYTES = 2 * 1024**3

MAX_N_EXISTS = 2


@dataclass(frozen=True)
class RuleTemplate:
    """Language bias for one clause slot: existential budget + intensional flag."""

    n_exists: int
    int_flag: bool

    def __post_init__(self):
        if not 0 <= self.n_exists <= MAX_N_EXISTS:
            raise ValueError(f"n_exists must be in [0, {MAX_N_EXISTS}], got {self.n_exists}")


@dataclass(frozen=True)
class ProgramTemplate:
    """Target + auxiliary predicates, two rule templates each, and the step count."""

    target: Predicate
    auxiliary: tuple[Predicate, ...]
    templates: Mapping[Predicate, tuple[RuleTemplate, RuleTemplate]]
    inference_steps: int
    prevent_target_recursion: bool = False

    def __post_init__(self):
        object.__setattr__(self, "auxiliary", tuple(self.auxiliary))
        object.__setattr__(self, "templates", dict(self.templates))
        if self.inference_steps < 1:
            raise ValueError("inference_steps must be >= 1")
        if not self.target.is_intensional:
            raise ValueError("target predicate must be intensional")
        for p in self.intensional:
            pair = self.templates.get(p)
            if pair is None or len(pair) != 2:
                raise ValueError(f"predicate {p} needs exactly two rule templates")

    @property
    def intensional(self) -> tuple[Predicate, ...]:
        return (self.target,) + self.auxiliary


@dataclass(frozen=True)
class CandidateSpace:
    """Ordered admissible clauses per slot plus the pair admissibility mask."""

    target: Predicate
    predicates: tuple[Predicate, ...]
    slot1: Mapping[str, tuple[Clause, ...]]
    slot2: Mapping[str, tuple[Clause, ...]]
    pair_mask: Mapping[str, np.ndarray]
    inference_steps: int
    prevent_target_recursion: bool
    memory_estimate_bytes: int

    def pair_count(self, name: str) -> int:
        return len(self.slot1[name]) * len(self.slot2[name])

    def admissible_count(self, name: str) -> int:
        return int(self.pair_mask[name].sum())

    def summary(self) -> str:
        lines = []
        for p in self.predicates:
            lines.append(
                f"{p.name}: {len(self.slot1[p.name])} x {len(self.slot2[p.name])} "
                f"pairs ({self.admissible_count(p.name)} admissible)"
            )
        lines.append(f"estimated memory: {self.memory_estimate_bytes:,} bytes")
        return "\n".join(lines)


def atom_sort_key(atom: Atom):
    """Lexicographic key: predicate name, then terms with variables before constants."""
    terms = tuple(
        (0, t.index) if isinstance(t, Variable) else (1, t.symbol) for t in atom.terms
    )
    return (atom.predicate.name, terms)


def canonical_clause(head: Atom, body: tuple[Atom, Atom]) -> Clause:
    """Normalize a body pair: head variables keep their ids, body-only
    variables are renamed in first-appearance order, and the two atoms are
    put in the order that minimizes the sort key."""
    head_vars = set(head.variables())
    arity = len(head.terms)
    orderings = [(body[0], body[1])]
    if body[0] != body[1]:
        orderings.append((body[1], body[0]))
    best = None
    best_key = None
    for ordering in orderings:
        mapping: dict[Variable, Variable] = {}
        next_id = arity
        renamed = []
        for b in ordering:
            terms = []
            for t in b.terms:
                if isinstance(t, Variable) and t not in head_vars:
                    if t not in mapping:
                        mapping[t] = Variable(next_id)
                        next_id += 1
                    terms.append(mapping[t])
                else:
                    terms.append(t)
            renamed.append(Atom(b.predicate, tuple(terms)))
        key = (atom_sort_key(renamed[0]), atom_sort_key(renamed[1]))
        if best_key is None or key < best_key:
            best_key = key
            best = tuple(renamed)
    return Clause(head, best)


def clause_sort_key(clause: Clause):
    return tuple(atom_sort_key(b) for b in clause.body)


def generate_clauses(
    predicate: Predicate, template: RuleTemplate, language: Language
) -> tuple[Clause, ...]:
    """Enumerate every admissible clause with the given head predicate.

    Restrictions: exactly two body atoms; arity of every predicate at most
    two; every head variable occurs in the body; the head atom itself never
    occurs in the body; at most ``n_exists`` body-only variables; intensional
    predicates appear in bodies only when ``int_flag`` is set.  The result is
    duplicate-free modulo body order and variable renaming, sorted by the
    canonical clause key.
    """
    if not predicate.is_intensional:
        raise ValueError(f"{predicate} is extensional and cannot head a clause")
    head_vars = tuple(Variable(i) for i in range(predicate.arity))
    head = Atom(predicate, head_vars)
    pool = head_vars + tuple(
        Variable(predicate.arity + i) for i in range(template.n_exists)
    )
    allowed = [
        q for q in language.predicates if template.int_flag or not q.is_intensional
    ]
    atoms = [
        Atom(q, args) for q in allowed for args in product(pool, repeat=q.arity)
    ]
    out: dict[tuple, Clause] = {}
    head_var_set = set(head_vars)
    for a1, a2 in combinations_with_replacement(atoms, 2):
        if head in (a1, a2):
            continue
        body_vars = {v for a in (a1, a2) for v in a.variables()}
        if not head_var_set <= body_vars:
            continue
        if len(body_vars - head_var_set) > template.n_exists:
            continue
        clause = canonical_clause(head, (a1, a2))
        out.setdefault(clause_sort_key(clause), clause)
    if not out:
        raise EmptyCandidateSpace(
            f"no clause for {predicate} survives template "
            f"(n_exists={template.n_exists}, int_flag={template.int_flag})"
        )
    return tuple(out[k] for k in sorted(out))


def audit_clause(
    clause: Clause,
    template: RuleTemplate,
    language: Language,
) -> list[str]:
    """Independent re-check of every generation restriction; empty list = pass."""
    violations = []
    if len(clause.body) != 2:
        violations.append("body must have exactly two atoms")
    for a in (clause.head,) + clause.body:
        if a.predicate.arity > 2:
            violations.append(f"{a.predicate} exceeds max arity 2")
    head_vars = set(clause.head.variables())
    body_vars = {v for b in clause.body for v in b.variables()}
    if not head_vars <= body_vars:
        violations.append("head variable missing from body")
    if clause.head in clause.body:
        violations.append("head atom occurs in body")
    if len(body_vars - head_vars) > template.n_exists:
        violations.append("too many existential variables")
    if not template.int_flag:
        for b in clause.body:
            if b.predicate.is_intensional:
                violations.append(f"intensional {b.predicate} in body without int flag")
    known = {p.name for p in language.predicates}
    for b in clause.body:
        if b.predicate.name not in known:
            violations.append(f"unknown predicate {b.predicate}")
    return violations


def _clauses_by_predicate(
    assignment: Program | Mapping[Predicate, Sequence[Clause]],
) -> dict[Predicate, list[Clause]]:
    if isinstance(assignment, Program):
        by_pred: dict[Predicate, list[Clause]] = {}
        for c in assignment.clauses:
            by_pred.setdefault(c.head.predicate, []).append(c)
        return by_pred
    return {p: list(cs) for p, cs in assignment.items()}


def clause_poisoned(clause: Clause, target: Predicate, prevent_target_recursion: bool) -> bool:
    """True when the clause can never take part in an admissible assignment.

    Without the prevent flag this is the pairwise form of the extended
    circular restriction: a non-target clause whose body contains the target
    atom applied to exactly the clause's own head variables.  With the flag,
    any body occurrence of the target predicate poisons the clause.
    """
    if prevent_target_recursion:
        return any(b.predicate == target for b in clause.body)
    if clause.head.predicate == target:
        return False
    return any(
        b.predicate == target and b.terms == clause.head.terms for b in clause.body
    )


def check_extended_circularity(
    assignment: Program | Mapping[Predicate, Sequence[Clause]],
    target: Predicate,
    prevent_target_recursion: bool = False,
) -> bool:
    """Admissibility of a full clause assignment.

    Rejects assignments where the target atom, applied to a clause's own
    head variables, occurs in the body of any predicate reachable (directly
    or transitively through auxiliary definitions) from the bodies of the
    target's clauses.  With ``prevent_target_recursion``, any body occurrence
    of the target predicate is rejected.
    """
    by_pred = _clauses_by_predicate(assignment)
    all_clauses = [c for cs in by_pred.values() for c in cs]
    if prevent_target_recursion:
        return not any(b.predicate == target for c in all_clauses for b in c.body)

    reachable: set[Predicate] = set()
    stack = [
        b.predicate
        for c in by_pred.get(target, [])
        for b in c.body
        if b.predicate.is_intensional
    ]
    while stack:
        q = stack.pop()
        if q in reachable:
            continue
        reachable.add(q)
        for c in by_pred.get(q, []):
            for b in c.body:
                if b.predicate.is_intensional:
                    stack.append(b.predicate)
    for q in reachable:
        for c in by_pred.get(q, []):
            for b in c.body:
                if b.predicate == target and b.terms == c.head.terms:
                    return False
    return True


def estimate_memory_bytes(
    language: Language,
    predicates: Sequence[Predicate],
    slot1: Mapping[str, Sequence[Clause]],
    slot2: Mapping[str, Sequence[Clause]],
    inference_steps: int,
) -> int:
    """Rough peak-memory estimate for grounding plus training buffers.

    Counts the valuation tape, per-predicate weight matrices (with gradient
    and optimizer state), the pairwise combination tensor, compiled ground
    instance tables, and the per-step clause-value tape.
    """
    n = len(language.constants)
    t = inference_steps
    atoms_total = sum(n ** p.arity for p in language.predicates)
    total = atoms_total * 8 * (t + 2) * 2
    for p in predicates:
        heads = n ** p.arity
        c1, c2 = slot1[p.name], slot2[p.name]
        m1, m2 = len(c1), len(c2)
        total += m1 * m2 * 8 * 4
        total += m1 * m2 * heads * 8 * 2
        instances = sum(n ** len(free_variables(c)[1]) for c in tuple(c1) + tuple(c2))
        total += heads * instances * 2 * 8
        total += (m1 + m2) * heads * 16 * t
    return int(total)


def build_candidate_space(
    template: ProgramTemplate,
    language: Language,
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
    mask_circular: bool = True,
) -> CandidateSpace:
    """Generate per-slot candidate lists for every intensional predicate.

    Fails fast with :class:`MemoryCapExceeded` when the estimated footprint
    of weights plus ground instance tables exceeds the cap, and with
    :class:`EmptyCandidateSpace` when masking leaves a predicate without any
    admissible pair.
    """
    predicates = template.intensional
    slot1: dict[str, tuple[Clause, ...]] = {}
    slot2: dict[str, tuple[Clause, ...]] = {}
    pair_mask: dict[str, np.ndarray] = {}
    for p in predicates:
        t1, t2 = template.templates[p]
        clauses1 = generate_clauses(p, t1, language)
        clauses2 = clauses1 if t2 == t1 else generate_clauses(p, t2, language)
        slot1[p.name] = clauses1
        slot2[p.name] = clauses2
        if mask_circular:
            poison1 = np.array(
                [clause_poisoned(c, template.target, template.prevent_target_recursion) for c in clauses1],
                dtype=bool,
            )
            poison2 = np.array(
                [clause_poisoned(c, template.target, template.prevent_target_recursion) for c in clauses2],
                dtype=bool,
            )
            mask = ~(poison1[:, None] | poison2[None, :])
        else:
            mask = np.ones((len(clauses1), len(clauses2)), dtype=bool)
        if not mask.any():
            raise EmptyCandidateSpace(
                f"every clause pair for {p} is masked as circular"
            )
        pair_mask[p.name] = mask

    estimate = estimate_memory_bytes(
        language, predicates, slot1, slot2, template.inference_steps
    )
    if estimate > memory_cap_bytes:
        raise MemoryCapExceeded(
            estimate,
            memory_cap_bytes,
            detail=f"{len(language.constants)} constants, "
            + ", ".join(f"{p.name}: {len(slot1[p.name])}x{len(slot2[p.name])}" for p in predicates),
        )
    return CandidateSpace(
        target=template.target,
        predicates=predicates,
        slot1=slot1,
        slot2=slot2,
        pair_mask=pair_mask,
        inference_steps=template.inference_steps,
        prevent_target_recursion=template.prevent_target_recursion,
        memory_estimate_bytes=estimate,
    )
