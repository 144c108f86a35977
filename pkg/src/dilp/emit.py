"""Presentation of learned programs: rephrasing, SQL emission, row evaluation.

Rephrasing inlines auxiliary predicate definitions into the target clauses
until only extensional atoms remain.  SQL emission handles acyclic arity-1
programs and produces a dialect-neutral SELECT whose aliases are ordered
deepest-dependency-first so each alias only references earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RecursivePredicate, UnsupportedArity
from .logic import (
    Atom,
    Language,
    Predicate,
    PredicateKind,
    Program,
    Variable,
    crisp_fixpoint,
)


@dataclass(frozen=True)
class FlatRule:
    """A fully inlined rule: target head plus a conjunction of extensional atoms."""

    head: Atom
    body: tuple[Atom, ...]

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(str(b) for b in self.body)}."


@dataclass(frozen=True)
class SqlQuery:
    text: str
    columns: tuple[str, ...]


def dependency_order(program: Program) -> list[Predicate]:
    """Intensional predicates ordered so dependencies precede dependents.

    Raises :class:`RecursivePredicate` on any cycle, including self-loops.
    """
    heads = list(program.head_predicates())
    deps = {
        p: {
            b.predicate
            for c in program.clauses_for(p)
            for b in c.body
            if b.predicate.is_intensional
        }
        for p in heads
    }
    order: list[Predicate] = []
    state: dict[Predicate, int] = {}

    def visit(p: Predicate, chain):
        if state.get(p) == 2:
            return
        if state.get(p) == 1:
            cycle = " -> ".join(q.name for q in chain + [p])
            raise RecursivePredicate(f"recursive definition: {cycle}")
        state[p] = 1
        for q in sorted(deps.get(p, ()), key=lambda q: q.name):
            if q in deps or q in state:
                visit(q, chain + [p])
            elif q.is_intensional and any(
                c.head.predicate == q for c in program.clauses
            ):
                visit(q, chain + [p])
            elif q.is_intensional:
                # intensional predicate without definition: treated as a leaf
                state[q] = 2
                order.append(q)
        state[p] = 2
        order.append(p)

    for p in heads:
        visit(p, [])
    return order


def rephrase(program: Program) -> list[FlatRule]:
    """Inline auxiliary definitions into flat extensional conjunctions.

    Each target clause expands through its auxiliary disjunctions; duplicate
    atoms inside a conjunction and duplicate conjunctions are removed.
    """
    dependency_order(program)  # raises on recursion
    target = None
    for c in program.clauses:
        if c.head.predicate.kind is PredicateKind.TARGET:
            target = c.head.predicate
            break
    if target is None:
        target = program.clauses[0].head.predicate

    by_pred = {p: program.clauses_for(p) for p in program.head_predicates()}

    def expand(conjunction: tuple[Atom, ...], next_var: int) -> list[tuple[Atom, ...]]:
        for i, atom in enumerate(conjunction):
            pred = atom.predicate
            if pred.is_intensional and pred in by_pred:
                results = []
                for clause in by_pred[pred]:
                    binding = dict(zip(clause.head.terms, atom.terms))
                    fresh = next_var
                    for b in clause.body:
                        for v in b.variables():
                            if v not in binding:
                                binding[v] = Variable(fresh)
                                fresh += 1
                    replaced = tuple(
                        Atom(b.predicate, tuple(binding.get(t, t) for t in b.terms))
                        for b in clause.body
                    )
                    new_conj = conjunction[:i] + replaced + conjunction[i + 1 :]
                    results.extend(expand(new_conj, fresh))
                return results
            if pred.is_intensional:
                raise ValueError(
                    f"{pred} occurs in a body but has no definition to inline"
                )
        return [conjunction]

    flats: list[FlatRule] = []
    seen = set()
    for clause in by_pred[target]:
        next_var = max((v.index for v in clause.variables()), default=-1) + 1
        for conj in expand(clause.body, next_var):
            deduped = []
            for atom in conj:
                if atom not in deduped:
                    deduped.append(atom)
            rule = FlatRule(clause.head, tuple(deduped))
            key = frozenset(deduped)
            if key not in seen:
                seen.add(key)
                flats.append(rule)
    return flats


def format_flat_rules(rules: list[FlatRule]) -> str:
    return "\n".join(str(r) for r in rules) + "\n"


def _boolean_expressions(program: Program) -> list[tuple[Predicate, list[list[str]]]]:
    """Per intensional predicate (dependencies first), its clause bodies as
    lists of referenced column/alias names with duplicates collapsed."""
    for clause in program.clauses:
        for atom in (clause.head,) + clause.body:
            if atom.predicate.arity != 1:
                raise UnsupportedArity(
                    f"{atom.predicate} has arity {atom.predicate.arity}; SQL emission needs arity 1"
                )
    order = dependency_order(program)
    defined = {p for p in program.head_predicates()}
    out = []
    for pred in order:
        if pred not in defined:
            continue
        # disjuncts in reverse clause order; pinned for output stability
        disjuncts = []
        for clause in reversed(program.clauses_for(pred)):
            conjunct = []
            for atom in clause.body:
                name = atom.predicate.name
                if name not in conjunct:
                    conjunct.append(name)
            if conjunct not in disjuncts:
                disjuncts.append(conjunct)
        out.append((pred, disjuncts))
    return out


def to_sql(program: Program, table_name: str) -> SqlQuery:
    """Emit one SELECT computing every intensional predicate as a boolean alias.

    Aliases appear in dependency order (deepest first) so later expressions
    may reference earlier aliases; the target is the OR over its clause
    conjunctions.  Only ``select``, ``and``, ``or``, ``as`` and ``from`` are
    used.
    """
    expressions = _boolean_expressions(program)
    referenced = []
    select_items = []
    for pred, disjuncts in expressions:
        text = " or ".join(" and ".join(conj) for conj in disjuncts)
        select_items.append(f"{text} as {pred.name}")
        for conj in disjuncts:
            for name in conj:
                if name not in referenced:
                    referenced.append(name)
    body = ",\n    ".join(select_items)
    text = f"select\n    {body}\nfrom {table_name}\n"
    return SqlQuery(text, tuple(referenced))


def evaluate_boolean_matrix(program: Program, env: dict[str, np.ndarray]) -> np.ndarray:
    """Target truth per row, given boolean columns for extensional predicates.

    Evaluates the same boolean structure the SQL emitter produces, computing
    each intensional predicate as a derived column in dependency order.
    ``env`` is extended in place with the derived columns.
    """
    expressions = _boolean_expressions(program)
    n = len(next(iter(env.values()))) if env else 0
    target_name = None
    for pred, disjuncts in expressions:
        value = np.zeros(n, dtype=bool)
        for conj in disjuncts:
            term = np.ones(n, dtype=bool)
            for name in conj:
                if name not in env:
                    raise KeyError(f"no boolean column for predicate {name}")
                term &= env[name]
            value |= term
        env[pred.name] = value
        if pred.kind is PredicateKind.TARGET:
            target_name = pred.name
    if target_name is None:
        target_name = expressions[-1][0].name
    return env[target_name]


def evaluate_program_rows(program: Program, fact_table) -> np.ndarray:
    """Truth of the target per constant, via the emitted boolean expressions.

    Only valid for acyclic arity-1 programs; equivalent to crisp evaluation
    (the equivalence is what :func:`sql_equivalence_check` verifies).
    """
    language = fact_table.language
    n = len(language.constants)
    column_of = {c: i for i, c in enumerate(language.constants)}
    env: dict[str, np.ndarray] = {}
    for p in language.predicates:
        if not p.is_intensional:
            env[p.name] = np.zeros(n, dtype=bool)
    for atom in fact_table.facts:
        env[atom.predicate.name][column_of[atom.terms[0]]] = True
    return evaluate_boolean_matrix(program, env)


def sql_equivalence_check(program: Program, fact_table) -> bool:
    """Row-by-row agreement between the SQL boolean semantics and the crisp
    logical evaluation of the program over a binarized table."""
    sql_rows = evaluate_program_rows(program, fact_table)
    language = fact_table.language
    extended = _extend_language_for(program, language)
    derived = crisp_fixpoint(program, fact_table.facts, extended)
    target = extended.target
    crisp_rows = np.array(
        [Atom(target, (c,)) in derived for c in language.constants], dtype=bool
    )
    return bool(np.array_equal(sql_rows, crisp_rows))


def _extend_language_for(program: Program, language: Language) -> Language:
    known = {p.name for p in language.predicates}
    extra = tuple(
        p for p in program.head_predicates() if p.name not in known
    )
    return Language(language.predicates + extra, language.constants)
