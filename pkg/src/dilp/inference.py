"""Grounding and differentiable forward chaining.

The candidate space is compiled against the constant set once: every clause
becomes two integer index tables mapping (ground head, substitution) to the
positions of its body atoms in the valuation vector.  A soft inference step
is then a handful of vectorized gathers, products, maxima and one mixing
contraction per intensional predicate.

Soft semantics: fuzzy conjunction is the product, existential quantification
and the two-clause combination are maxima, the clause-pair choice is a
softmax over the flattened pair matrix, and successive steps amalgamate by
probabilistic sum.  Extensional entries are never rewritten, so background
facts stay clamped at their input values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping

import numpy as np

from .clausegen import DEFAULT_MEMORY_CAP_BYTES, CandidateSpace, canonical_clause
from .errors import MemoryCapExceeded
from .logic import (
    Atom,
    Clause,
    Language,
    Predicate,
    Program,
    Variable,
    free_variables,
)

# rough per-atom cost of the python-side index (object + list slot + dict entry)
_INDEX_BYTES_PER_ATOM = 120


class GroundIndex:
    """Bijection between ground atoms and valuation-vector positions.

    Extensional atoms come first, then intensional ones, each block ordered
    by (predicate declaration order, constant tuple in constant order).
    """

    def __init__(self, language: Language, memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES):
        self.language = language
        n = len(language.constants)
        ordered = list(language.extensional) + list(language.intensional)
        n_atoms = sum(n ** p.arity for p in ordered)
        if n_atoms * _INDEX_BYTES_PER_ATOM > memory_cap_bytes:
            raise MemoryCapExceeded(
                n_atoms * _INDEX_BYTES_PER_ATOM,
                memory_cap_bytes,
                detail=f"{n_atoms:,} ground atoms over {n:,} constants",
            )
        self.offsets: dict[str, int] = {}
        atoms: list[Atom] = []
        for p in ordered:
            self.offsets[p.name] = len(atoms)
            for combo in product(language.constants, repeat=p.arity):
                atoms.append(Atom(p, combo))
        self.atoms: tuple[Atom, ...] = tuple(atoms)
        self.position: dict[Atom, int] = {a: i for i, a in enumerate(atoms)}

    def __len__(self) -> int:
        return len(self.atoms)

    def index_of(self, atom: Atom) -> int:
        try:
            return self.position[atom]
        except KeyError:
            raise KeyError(f"atom {atom} is not ground over this language") from None

    def pred_slice(self, name: str) -> slice:
        pred = self.language.predicate(name)
        start = self.offsets[name]
        return slice(start, start + len(self.language.constants) ** pred.arity)

    def valuation_from_facts(self, facts: Iterable[Atom]) -> np.ndarray:
        """Characteristic vector of the given ground atoms."""
        v = np.zeros(len(self.atoms))
        for f in facts:
            v[self.index_of(f)] = 1.0
        return v


@dataclass
class CompiledClause:
    """Per ground head atom, the valuation positions of both body atoms.

    ``body1``/``body2`` have shape (heads, substitutions): row ``h`` lists,
    for every grounding of the body-only variables, the index pair whose
    fuzzy conjunction supports head ``h``.
    """

    clause: Clause
    body1: np.ndarray
    body2: np.ndarray


def compile_clause(clause: Clause, index: GroundIndex) -> CompiledClause:
    language = index.language
    n = len(language.constants)
    head = clause.head
    arity = head.predicate.arity
    head_terms = head.terms
    if len(set(head_terms)) != arity or not all(
        isinstance(t, Variable) for t in head_terms
    ):
        raise ValueError(f"clause head {head} must use distinct variables")
    _, body_only = free_variables(clause)
    n_heads = n ** arity
    n_inst = n ** len(body_only)

    head_grids = np.unravel_index(np.arange(n_heads), (n,) * arity)
    exist_grids = np.unravel_index(np.arange(n_inst), (n,) * len(body_only)) if body_only else ()
    grid_of: dict[Variable, np.ndarray] = {}
    for pos, term in enumerate(head_terms):
        grid_of[term] = head_grids[pos].reshape(-1, 1)
    for pos, var in enumerate(body_only):
        grid_of[var] = exist_grids[pos].reshape(1, -1)

    def body_index(atom: Atom) -> np.ndarray:
        out = np.full((1, 1), index.offsets[atom.predicate.name], dtype=np.int64)
        stride = n ** (atom.predicate.arity - 1)
        for term in atom.terms:
            if isinstance(term, Variable):
                out = out + grid_of[term] * stride
            else:
                out = out + language.constant_index(term) * stride
            stride //= n
        return np.broadcast_to(out, (n_heads, n_inst)).astype(np.int64)

    return CompiledClause(clause, body_index(clause.body[0]), body_index(clause.body[1]))


@dataclass
class CompiledPredicate:
    predicate: Predicate
    view: slice
    slot1: list[CompiledClause]
    slot2: list[CompiledClause]
    mask: np.ndarray

    @property
    def shared_slots(self) -> bool:
        return self.slot1 is self.slot2


@dataclass
class CompiledSpace:
    index: GroundIndex
    space: CandidateSpace
    preds: list[CompiledPredicate]

    @property
    def inference_steps(self) -> int:
        return self.space.inference_steps


def compile_space(space: CandidateSpace, index: GroundIndex) -> CompiledSpace:
    cache: dict[Clause, CompiledClause] = {}

    def compile_all(clauses) -> list[CompiledClause]:
        out = []
        for c in clauses:
            if c not in cache:
                cache[c] = compile_clause(c, index)
            out.append(cache[c])
        return out

    preds = []
    for p in space.predicates:
        slot1 = compile_all(space.slot1[p.name])
        if space.slot2[p.name] is space.slot1[p.name]:
            slot2 = slot1
        else:
            slot2 = compile_all(space.slot2[p.name])
        preds.append(
            CompiledPredicate(p, index.pred_slice(p.name), slot1, slot2, space.pair_mask[p.name])
        )
    return CompiledSpace(index, space, preds)


class WeightSet:
    """One real matrix of clause-pair weights per intensional predicate."""

    def __init__(self, matrices: Mapping[str, np.ndarray]):
        self.matrices = {name: np.asarray(m, dtype=float) for name, m in matrices.items()}
        for name, m in self.matrices.items():
            if not np.all(np.isfinite(m)):
                raise ValueError(f"non-finite weights for {name}")

    @classmethod
    def random(cls, space: CandidateSpace, seed: int, scale: float) -> "WeightSet":
        rng = np.random.default_rng(seed)
        return cls(
            {
                p.name: rng.normal(0.0, scale, size=space.pair_mask[p.name].shape)
                for p in space.predicates
            }
        )

    @classmethod
    def one_hot(cls, space: CandidateSpace, program: Program, gap: float = 60.0) -> "WeightSet":
        """Weights whose softmax is (numerically) concentrated on ``program``.

        Each predicate's clauses are matched against the slot candidate lists
        up to canonical form; a single defining clause selects the diagonal
        pair when both slots carry it.
        """
        matrices = {}
        for p in space.predicates:
            clauses = [
                canonical_clause(c.head, c.body)
                for c in program.clauses
                if c.head.predicate.name == p.name
            ]
            if not clauses:
                raise ValueError(f"program does not define {p.name}")
            if len(clauses) == 1:
                clauses = [clauses[0], clauses[0]]
            slot1, slot2 = space.slot1[p.name], space.slot2[p.name]
            pair = None
            for c1, c2 in (clauses, clauses[::-1]):
                if c1 in slot1 and c2 in slot2:
                    j, k = slot1.index(c1), slot2.index(c2)
                    if space.pair_mask[p.name][j, k]:
                        pair = (j, k)
                        break
            if pair is None:
                raise ValueError(f"clauses for {p.name} are not an admissible candidate pair")
            w = np.zeros(space.pair_mask[p.name].shape)
            w[pair] = gap
            matrices[p.name] = w
        return cls(matrices)

    def softmaxes(self, space: CandidateSpace) -> dict[str, np.ndarray]:
        return {
            p.name: masked_softmax(self.matrices[p.name], space.pair_mask[p.name])
            for p in space.predicates
        }

    def copy(self) -> "WeightSet":
        return WeightSet({n: m.copy() for n, m in self.matrices.items()})

    def save(self, path) -> None:
        lines = []
        for name in sorted(self.matrices):
            m = self.matrices[name]
            lines.append(f"{name} {m.shape[0]} {m.shape[1]}")
            for row in m:
                lines.append(" ".join(repr(float(x)) for x in row))
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "WeightSet":
        matrices = {}
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        i = 0
        while i < len(lines):
            name, rows, cols = lines[i].split()
            rows, cols = int(rows), int(cols)
            block = [
                [float(x) for x in lines[i + 1 + r].split()] for r in range(rows)
            ]
            matrices[name] = np.array(block).reshape(rows, cols)
            i += rows + 1
        return cls(matrices)


def masked_softmax(weights: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the flattened pair matrix, with inadmissible pairs at zero."""
    if not mask.any():
        raise ValueError("softmax support is empty")
    z = np.where(mask, weights, -np.inf)
    z = z - z.max()
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum()


def clause_values(valuation: np.ndarray, compiled: CompiledClause) -> tuple[np.ndarray, np.ndarray]:
    """Per ground head: max over substitutions of the body-pair product.

    Returns the values and the index of the winning substitution (lowest
    index on ties, which fixes the gradient routing downstream).
    """
    if compiled.body1.size == 0:
        n_heads = compiled.body1.shape[0]
        return np.zeros(n_heads), np.zeros(n_heads, dtype=np.int64)
    prod = valuation[compiled.body1] * valuation[compiled.body2]
    best = prod.argmax(axis=1)
    return prod[np.arange(prod.shape[0]), best], best


def _slot_values(valuation: np.ndarray, slot: list[CompiledClause]):
    n_heads = slot[0].body1.shape[0] if slot else 0
    values = np.zeros((len(slot), n_heads))
    argmaxes = np.zeros((len(slot), n_heads), dtype=np.int64)
    for j, cc in enumerate(slot):
        values[j], argmaxes[j] = clause_values(valuation, cc)
    return values, argmaxes


def step_forward(
    valuation: np.ndarray,
    softmaxes: Mapping[str, np.ndarray],
    compiled: CompiledSpace,
    tape: list | None = None,
) -> np.ndarray:
    """One soft inference step; optionally records intermediates for backprop."""
    new_v = valuation.copy()
    records: dict[str, tuple] = {}
    for cp in compiled.preds:
        c1, a1 = _slot_values(valuation, cp.slot1)
        if cp.shared_slots:
            c2, a2 = c1, a1
        else:
            c2, a2 = _slot_values(valuation, cp.slot2)
        pair_max = np.maximum(c1[:, None, :], c2[None, :, :])
        s = softmaxes[cp.predicate.name]
        m1, m2, n_heads = pair_max.shape
        b = s.reshape(-1) @ pair_max.reshape(m1 * m2, n_heads)
        np.clip(b, 0.0, 1.0, out=b)
        u = valuation[cp.view]
        # probabilistic sum written so rounding cannot leave [0, 1]
        new_v[cp.view] = 1.0 - (1.0 - u) * (1.0 - b)
        if tape is not None:
            records[cp.predicate.name] = (c1, c2, a1, a2, b)
    if tape is not None:
        tape.append((valuation, records))
    return new_v


def soft_step(valuation: np.ndarray, weights: WeightSet, compiled: CompiledSpace) -> np.ndarray:
    return step_forward(valuation, weights.softmaxes(compiled.space), compiled)


def forward_chain(
    facts_valuation: np.ndarray,
    weights: WeightSet,
    compiled: CompiledSpace,
    steps: int | None = None,
    tape: list | None = None,
) -> np.ndarray:
    """Apply ``steps`` soft inference steps (default: the template's T)."""
    if steps is None:
        steps = compiled.inference_steps
    if steps < 1:
        raise ValueError("steps must be >= 1")
    softmaxes = weights.softmaxes(compiled.space)
    v = facts_valuation
    for _ in range(steps):
        v = step_forward(v, softmaxes, compiled, tape)
    return v
