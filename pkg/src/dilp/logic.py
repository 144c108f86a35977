"""First-order language core: terms, atoms, definite clauses, programs.

Everything here is immutable after construction and safe to share across
threads.  The crisp bottom-up evaluator doubles as the ground-truth oracle
for the soft inference engine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from itertools import product
from typing import Iterable, Iterator, Mapping, Union

from .errors import UnboundVariable

MAX_ARITY = 2

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_VARIABLE_TOKEN_RE = re.compile(r"[A-Z_][A-Za-z0-9_]*")
_BARE_CONSTANT_RE = re.compile(r"[a-z0-9][A-Za-z0-9_]*")


class PredicateKind(Enum):
    EXTENSIONAL = "extensional"
    TARGET = "intensional-target"
    AUXILIARY = "intensional-auxiliary"


@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int
    kind: PredicateKind = PredicateKind.EXTENSIONAL

    def __post_init__(self):
        if not _IDENT_RE.fullmatch(self.name):
            raise ValueError(f"predicate name {self.name!r} is not an identifier")
        if not 1 <= self.arity <= MAX_ARITY:
            raise ValueError(f"predicate {self.name} has arity {self.arity}, max is {MAX_ARITY}")

    @property
    def is_intensional(self) -> bool:
        return self.kind is not PredicateKind.EXTENSIONAL

    def __str__(self) -> str:
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True)
class Variable:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("variable index must be non-negative")

    def __str__(self) -> str:
        return f"X{self.index}"


@dataclass(frozen=True)
class Constant:
    symbol: str

    def __post_init__(self):
        if not isinstance(self.symbol, str) or not self.symbol:
            raise ValueError("constant symbol must be a non-empty string")

    def __str__(self) -> str:
        if _BARE_CONSTANT_RE.fullmatch(self.symbol):
            return self.symbol
        return f"'{self.symbol}'"


Term = Union[Variable, Constant]


@dataclass(frozen=True)
class Atom:
    predicate: Predicate
    terms: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(self.terms) != self.predicate.arity:
            raise ValueError(
                f"{self.predicate} applied to {len(self.terms)} terms"
            )
        for t in self.terms:
            if not isinstance(t, (Variable, Constant)):
                raise TypeError(f"bad term {t!r}")

    @property
    def is_ground(self) -> bool:
        return all(isinstance(t, Constant) for t in self.terms)

    def variables(self) -> tuple[Variable, ...]:
        """Variables in appearance order, without duplicates."""
        seen: list[Variable] = []
        for t in self.terms:
            if isinstance(t, Variable) and t not in seen:
                seen.append(t)
        return tuple(seen)

    def __str__(self) -> str:
        return f"{self.predicate.name}({','.join(str(t) for t in self.terms)})"


@dataclass(frozen=True)
class Clause:
    """Definite clause with exactly two body atoms.

    Construction enforces well-formedness: the head predicate is
    intensional, every head variable occurs in the body, and the head atom
    itself never appears in its own body.
    """

    head: Atom
    body: tuple[Atom, Atom]

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))
        if len(self.body) != 2:
            raise ValueError("clause body must contain exactly two atoms")
        if not self.head.predicate.is_intensional:
            raise ValueError(f"head predicate {self.head.predicate} is extensional")
        body_vars = {v for b in self.body for v in b.variables()}
        missing = [v for v in self.head.variables() if v not in body_vars]
        if missing:
            raise ValueError(f"head variables {missing} do not occur in the body")
        if self.head in self.body:
            raise ValueError("head atom occurs in its own body")

    def variables(self) -> tuple[Variable, ...]:
        seen = list(self.head.variables())
        for b in self.body:
            for v in b.variables():
                if v not in seen:
                    seen.append(v)
        return tuple(seen)

    def __str__(self) -> str:
        return f"{self.head} :- {self.body[0]}, {self.body[1]}."


@dataclass(frozen=True)
class Program:
    """A set of definite clauses grouped by head predicate."""

    clauses: tuple[Clause, ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        per_head: dict[Predicate, int] = {}
        for c in self.clauses:
            per_head[c.head.predicate] = per_head.get(c.head.predicate, 0) + 1
        for pred, count in per_head.items():
            if count > 2:
                raise ValueError(f"{pred} is defined by {count} clauses, max is 2")

    def head_predicates(self) -> tuple[Predicate, ...]:
        seen: list[Predicate] = []
        for c in self.clauses:
            if c.head.predicate not in seen:
                seen.append(c.head.predicate)
        return tuple(seen)

    def clauses_for(self, predicate: Predicate) -> tuple[Clause, ...]:
        return tuple(c for c in self.clauses if c.head.predicate == predicate)

    def __str__(self) -> str:
        return "\n".join(str(c) for c in self.clauses)


@dataclass(frozen=True)
class Language:
    """Predicate vocabulary plus the ordered constant universe.

    Constant order is insertion order and is the single source of truth for
    all downstream ground-atom indexing.
    """

    predicates: tuple[Predicate, ...]
    constants: tuple[Constant, ...]

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        object.__setattr__(self, "constants", tuple(self.constants))
        if not self.constants:
            raise ValueError("constant set must be non-empty")
        if len({c.symbol for c in self.constants}) != len(self.constants):
            raise ValueError("constants must be duplicate-free")
        names = [p.name for p in self.predicates]
        if len(set(names)) != len(names):
            raise ValueError("predicate names must be unique within a language")
        targets = [p for p in self.predicates if p.kind is PredicateKind.TARGET]
        if len(targets) != 1:
            raise ValueError(f"language must have exactly one target predicate, got {len(targets)}")

    @property
    def target(self) -> Predicate:
        return next(p for p in self.predicates if p.kind is PredicateKind.TARGET)

    @property
    def extensional(self) -> tuple[Predicate, ...]:
        return tuple(p for p in self.predicates if not p.is_intensional)

    @property
    def intensional(self) -> tuple[Predicate, ...]:
        return tuple(p for p in self.predicates if p.is_intensional)

    def predicate(self, name: str) -> Predicate:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    def constant_index(self, constant: Constant) -> int:
        try:
            return self._constant_pos[constant]
        except AttributeError:
            object.__setattr__(
                self, "_constant_pos", {c: i for i, c in enumerate(self.constants)}
            )
            return self._constant_pos[constant]


@dataclass(frozen=True)
class ExampleSet:
    """Ground target atoms labeled positive or negative, disjoint by construction."""

    positives: tuple[Atom, ...]
    negatives: tuple[Atom, ...]

    def __post_init__(self):
        object.__setattr__(self, "positives", tuple(self.positives))
        object.__setattr__(self, "negatives", tuple(self.negatives))
        for atom in self.positives + self.negatives:
            if not atom.is_ground:
                raise ValueError(f"example {atom} is not ground")
        overlap = set(self.positives) & set(self.negatives)
        if overlap:
            raise ValueError(f"examples labeled both positive and negative: {sorted(map(str, overlap))}")

    def __len__(self) -> int:
        return len(self.positives) + len(self.negatives)


def substitute(atom: Atom, binding: Mapping[Variable, Constant]) -> Atom:
    """Apply a variable-to-constant binding, producing a ground atom."""
    terms = []
    for t in atom.terms:
        if isinstance(t, Variable):
            if t not in binding:
                raise UnboundVariable(f"no binding for {t} in {atom}")
            terms.append(binding[t])
        else:
            terms.append(t)
    return Atom(atom.predicate, tuple(terms))


def free_variables(clause: Clause) -> tuple[tuple[Variable, ...], tuple[Variable, ...]]:
    """Partition clause variables into (head variables, body-only variables).

    The body-only variables are the existentially quantified ones; their
    count is the clause's existential budget.
    """
    head_vars = clause.head.variables()
    body_only = [v for v in clause.variables() if v not in head_vars]
    return head_vars, tuple(body_only)


def crisp_consequence(
    program: Program,
    facts: Iterable[Atom],
    language: Language,
    steps: int,
) -> frozenset[Atom]:
    """Bottom-up immediate-consequence iteration, at most ``steps`` times.

    Returns the input facts plus every ground atom derivable from them in at
    most ``steps`` rule applications; stops early at a fixpoint.  Input atoms
    are normally extensional, but intensional atoms are accepted and treated
    as initially true (used when example atoms are held fixed).
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    derived: set[Atom] = set()
    for fact in facts:
        if not fact.is_ground:
            raise ValueError(f"fact {fact} is not ground")
        derived.add(fact)
    grounders = [_ClauseGrounder(c, language) for c in program.clauses]
    for _ in range(steps):
        new: set[Atom] = set()
        for g in grounders:
            g.derive(derived, new)
        if new <= derived:
            break
        derived |= new
    return frozenset(derived)


def crisp_fixpoint(program: Program, facts: Iterable[Atom], language: Language) -> frozenset[Atom]:
    """Least fixpoint of the immediate-consequence operator."""
    bound = sum(
        len(language.constants) ** p.arity for p in language.predicates if p.is_intensional
    )
    return crisp_consequence(program, facts, language, bound + 1)


class _ClauseGrounder:
    """Precomputed substitution enumeration for one clause."""

    def __init__(self, clause: Clause, language: Language):
        self.clause = clause
        self.variables = clause.variables()
        self.constants = language.constants

    def derive(self, truths: set[Atom], out: set[Atom]) -> None:
        b1, b2 = self.clause.body
        for combo in product(self.constants, repeat=len(self.variables)):
            binding = dict(zip(self.variables, combo))
            if substitute(b1, binding) in truths and substitute(b2, binding) in truths:
                out.add(substitute(self.clause.head, binding))


# ---------------------------------------------------------------------------
# Plain-text clause syntax: ``head :- body1, body2.``
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<quoted>'[^']*')|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<number>\d+(?:\.\d+)?)|(?P<neck>:-)|(?P<punct>[(),.]))"
)


def _tokenize(text: str) -> Iterator[tuple[str, str]]:
    pos = 0
    while pos < len(text):
        if text[pos] == "%":  # comment to end of line
            nl = text.find("\n", pos)
            pos = len(text) if nl < 0 else nl + 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                return
            raise ValueError(f"cannot tokenize clause text at: {text[pos:pos+20]!r}")
        pos = m.end()
        for kind in ("quoted", "ident", "number", "neck", "punct"):
            val = m.group(kind)
            if val is not None:
                yield kind, val
                break


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.pos = 0

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self) -> tuple[str, str]:
        if self.at_end():
            return ("eof", "")
        return self.tokens[self.pos]

    def take(self, kind: str | None = None, value: str | None = None) -> tuple[str, str]:
        if self.at_end():
            raise ValueError("unexpected end of clause text")
        k, v = self.tokens[self.pos]
        if (kind and k != kind) or (value and v != value):
            raise ValueError(f"expected {kind or value}, got {v!r}")
        self.pos += 1
        return k, v

    def parse_atom(self) -> tuple[str, list[tuple[str, str]]]:
        _, name = self.take("ident")
        self.take("punct", "(")
        terms = [self.parse_term()]
        while self.peek() == ("punct", ","):
            self.take()
            terms.append(self.parse_term())
        self.take("punct", ")")
        return name, terms

    def parse_term(self) -> tuple[str, str]:
        k, v = self.take()
        if k == "quoted":
            return "constant", v[1:-1]
        if k == "number":
            return "constant", v
        if k == "ident":
            if _VARIABLE_TOKEN_RE.fullmatch(v):
                return "variable", v
            return "constant", v
        raise ValueError(f"bad term token {v!r}")

    def parse_clause(self) -> tuple:
        head = self.parse_atom()
        self.take("neck")
        body = [self.parse_atom()]
        while self.peek() == ("punct", ","):
            self.take()
            body.append(self.parse_atom())
        self.take("punct", ".")
        return head, body


def parse_program(
    text: str,
    language: Language | None = None,
    target_name: str | None = None,
) -> Program:
    """Parse clause syntax back into a :class:`Program`.

    Predicates are resolved against ``language`` when given; otherwise head
    names become intensional predicates (the one matching ``target_name``,
    or the first head, is the target) and the rest extensional.  Uppercase
    terms are variables; single-atom bodies are accepted and stored as the
    duplicated two-atom form.
    """
    parser = _Parser(text)
    raw: list[tuple] = []
    while not parser.at_end():
        raw.append(parser.parse_clause())

    head_names = []
    for (name, _terms), _body in raw:
        if name not in head_names:
            head_names.append(name)
    arities: dict[str, int] = {}
    for (name, terms), body in raw:
        for n, ts in [(name, terms)] + body:
            if n in arities and arities[n] != len(ts):
                raise ValueError(f"predicate {n} used with inconsistent arity")
            arities[n] = len(ts)

    def resolve(name: str) -> Predicate:
        if language is not None:
            try:
                return language.predicate(name)
            except KeyError:
                pass
        if name in head_names:
            if name == (target_name or head_names[0]) and (
                language is None or name not in {p.name for p in language.predicates}
            ):
                kind = PredicateKind.TARGET
            else:
                kind = PredicateKind.AUXILIARY
            return Predicate(name, arities[name], kind)
        return Predicate(name, arities[name], PredicateKind.EXTENSIONAL)

    clauses = []
    for (head_name, head_terms), body in raw:
        if len(body) == 1:
            body = [body[0], body[0]]
        if len(body) != 2:
            raise ValueError("clause bodies must have one or two atoms")
        var_ids: dict[str, int] = {}

        def to_term(kind_value: tuple[str, str]) -> Term:
            kind, value = kind_value
            if kind == "variable":
                if value not in var_ids:
                    var_ids[value] = len(var_ids)
                return Variable(var_ids[value])
            return Constant(value)

        head_atom = Atom(resolve(head_name), tuple(to_term(t) for t in head_terms))
        body_atoms = tuple(
            Atom(resolve(n), tuple(to_term(t) for t in ts)) for n, ts in body
        )
        clauses.append(Clause(head_atom, body_atoms))
    return Program(tuple(clauses))


def format_program(program: Program) -> str:
    return "\n".join(str(c) for c in program.clauses) + "\n"
