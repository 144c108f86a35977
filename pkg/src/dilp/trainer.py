"""Gradient-based learning of clause-pair weights and program extraction.

The backward pass mirrors the forward computation exactly: products route
gradient to both factors, maxima route it to the winning entry (lowest index
on ties), the pair softmax is differentiated jointly over its flattened
support, and masked pairs receive zero gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clausegen import (
    DEFAULT_MEMORY_CAP_BYTES,
    CandidateSpace,
    ProgramTemplate,
    build_candidate_space,
    check_extended_circularity,
)
from .errors import NonFiniteLoss
from .inference import (
    CompiledSpace,
    GroundIndex,
    WeightSet,
    compile_space,
    forward_chain,
    masked_softmax,
    step_forward,
)
from .logic import ExampleSet, Language, PredicateKind, Program
from . import metrics

log = logging.getLogger(__name__)

LOSS_CLAMP = 1e-7
CLASSIFICATION_THRESHOLD = 0.5
SOFT_MARGIN = (0.3, 0.7)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    max_steps: int = 6000
    seed: int = 0
    early_stop_loss: float = 1e-3
    weight_init_scale: float = 0.1
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    restarts: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class TrainedModel:
    weights: WeightSet
    loss_trace: list[float]
    extracted: Program
    config: TrainConfig
    template: ProgramTemplate
    space: CandidateSpace
    language: Language
    margin_violations: int = 0

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def example_indices(examples: ExampleSet, index: GroundIndex) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([index.index_of(a) for a in examples.positives], dtype=np.int64)
    neg = np.array([index.index_of(a) for a in examples.negatives], dtype=np.int64)
    return pos, neg


def loss(valuation: np.ndarray, examples: ExampleSet, index: GroundIndex) -> float:
    """Mean cross-entropy over positive and negative example atoms."""
    pos, neg = example_indices(examples, index)
    return _loss_from_indices(valuation, pos, neg)


def _loss_from_indices(valuation: np.ndarray, pos: np.ndarray, neg: np.ndarray) -> float:
    vp = np.clip(valuation[pos], LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    vn = np.clip(valuation[neg], LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    terms = np.concatenate([-np.log(vp), -np.log(1.0 - vn)])
    if terms.size == 0:
        raise ValueError("cannot compute loss over zero examples")
    return float(terms.mean())


def loss_and_gradients(
    weights: WeightSet,
    facts_valuation: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    compiled: CompiledSpace,
    steps: int | None = None,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Forward pass with tape, then exact reverse-mode gradients.

    Returns (loss, per-predicate weight gradients, final valuation).
    """
    space = compiled.space
    if steps is None:
        steps = space.inference_steps
    softmaxes = weights.softmaxes(space)
    tape: list = []
    v = facts_valuation
    for _ in range(steps):
        v = step_forward(v, softmaxes, compiled, tape)
    final_v = v
    total = _loss_from_indices(final_v, pos, neg)

    n_examples = len(pos) + len(neg)
    d_v = np.zeros_like(final_v)
    vp = np.clip(final_v[pos], LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    vn = np.clip(final_v[neg], LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    interior_pos = (final_v[pos] > LOSS_CLAMP) & (final_v[pos] < 1.0 - LOSS_CLAMP)
    interior_neg = (final_v[neg] > LOSS_CLAMP) & (final_v[neg] < 1.0 - LOSS_CLAMP)
    np.add.at(d_v, pos, np.where(interior_pos, -1.0 / vp, 0.0) / n_examples)
    np.add.at(d_v, neg, np.where(interior_neg, 1.0 / (1.0 - vn), 0.0) / n_examples)

    d_smax = {
        p.predicate.name: np.zeros_like(softmaxes[p.predicate.name]) for p in compiled.preds
    }
    for t in range(steps - 1, -1, -1):
        v_prev, records = tape[t]
        d_prev = d_v.copy()
        # amalgamation: v' = 1 - (1-u)(1-b), so du picks up (1-b) first ...
        for cp in compiled.preds:
            _, _, _, _, b = records[cp.predicate.name]
            d_prev[cp.view] = d_v[cp.view] * (1.0 - b)
        # ... and body usages scatter into the same buffer afterwards
        for cp in compiled.preds:
            name = cp.predicate.name
            c1, c2, a1, a2, b = records[name]
            g = d_v[cp.view]
            if not np.any(g):
                continue
            u = v_prev[cp.view]
            db = g * (1.0 - u)
            s = softmaxes[name]
            m1, m2 = s.shape
            pair_max = np.maximum(c1[:, None, :], c2[None, :, :])
            d_smax[name] += (pair_max.reshape(m1 * m2, -1) @ db).reshape(m1, m2)
            spread = s[:, :, None] * db[None, None, :]
            slot1_wins = c1[:, None, :] >= c2[None, :, :]
            d_c1 = np.where(slot1_wins, spread, 0.0).sum(axis=1)
            d_c2 = np.where(slot1_wins, 0.0, spread).sum(axis=0)
            _scatter_clause_grads(d_prev, v_prev, cp.slot1, d_c1, a1)
            _scatter_clause_grads(d_prev, v_prev, cp.slot2, d_c2, a2)
        d_v = d_prev

    grads = {}
    for cp in compiled.preds:
        name = cp.predicate.name
        s = softmaxes[name]
        g = d_smax[name]
        grads[name] = s * (g - float((s * g).sum()))
    return total, grads, final_v


def _scatter_clause_grads(d_prev, v_prev, slot, d_c, argmaxes):
    rows = None
    for j, cc in enumerate(slot):
        dcj = d_c[j]
        if not np.any(dcj) or cc.body1.size == 0:
            continue
        if rows is None:
            rows = np.arange(cc.body1.shape[0])
        win = argmaxes[j]
        b1 = cc.body1[rows, win]
        b2 = cc.body2[rows, win]
        np.add.at(d_prev, b1, dcj * v_prev[b2])
        np.add.at(d_prev, b2, dcj * v_prev[b1])


def gradients(
    weights: WeightSet,
    facts_valuation: np.ndarray,
    examples: ExampleSet,
    compiled: CompiledSpace,
    steps: int | None = None,
) -> dict[str, np.ndarray]:
    """Gradient of the example loss with respect to every clause-pair weight."""
    pos, neg = example_indices(examples, compiled.index)
    _, grads, _ = loss_and_gradients(weights, facts_valuation, pos, neg, compiled, steps)
    return grads


def extract_program(weights: WeightSet, space: CandidateSpace) -> Program:
    """Argmax admissible pair per predicate; equal clauses collapse to one."""
    clauses = []
    for p in space.predicates:
        s = masked_softmax(weights.matrices[p.name], space.pair_mask[p.name])
        j, k = np.unravel_index(int(np.argmax(s)), s.shape)
        c1 = space.slot1[p.name][j]
        c2 = space.slot2[p.name][k]
        clauses.append(c1)
        if c2 != c1:
            clauses.append(c2)
    return Program(tuple(clauses))


def training_language(base: Language, template: ProgramTemplate) -> Language:
    """Extend a fact table's language with the template's auxiliary predicates."""
    extra = [p for p in template.intensional if p.name not in {q.name for q in base.predicates}]
    for p in extra:
        if p.kind is not PredicateKind.AUXILIARY:
            raise ValueError(f"cannot add non-auxiliary predicate {p} to the language")
    return Language(base.predicates + tuple(extra), base.constants)


def train(
    fact_table,
    template: ProgramTemplate,
    config: TrainConfig = TrainConfig(),
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES,
    mask_circular: bool = True,
) -> TrainedModel:
    """Learn clause-pair weights by RMS-scaled gradient descent.

    Runs ``config.restarts`` independent seeded runs and keeps the one with
    the lowest final loss; stops each run early once the loss drops under
    ``early_stop_loss``.
    """
    if template.target.name != fact_table.language.target.name:
        raise ValueError(
            f"template target {template.target.name} does not match "
            f"fact table target {fact_table.language.target.name}"
        )
    language = training_language(fact_table.language, template)
    space = build_candidate_space(template, language, memory_cap_bytes, mask_circular)
    for p in space.predicates:
        log.info(
            "%s: %d x %d candidate pairs (%d admissible)",
            p.name,
            len(space.slot1[p.name]),
            len(space.slot2[p.name]),
            space.admissible_count(p.name),
        )
    index = GroundIndex(language, memory_cap_bytes)
    compiled = compile_space(space, index)
    v0 = index.valuation_from_facts(fact_table.facts)
    pos, neg = example_indices(fact_table.examples, index)

    best: tuple[WeightSet, list[float]] | None = None
    for restart in range(config.restarts):
        weights = WeightSet.random(space, config.seed + restart, config.weight_init_scale)
        rms = {name: np.zeros_like(m) for name, m in weights.matrices.items()}
        trace: list[float] = []
        for step in range(config.max_steps):
            value, grads, _ = loss_and_gradients(weights, v0, pos, neg, compiled)
            if not np.isfinite(value):
                raise NonFiniteLoss(
                    f"loss became {value} at step {step} (seed {config.seed + restart})"
                )
            trace.append(value)
            if value < config.early_stop_loss:
                break
            for name, g in grads.items():
                acc = rms[name]
                acc *= config.rms_decay
                acc += (1.0 - config.rms_decay) * g * g
                weights.matrices[name] -= (
                    config.learning_rate * g / (np.sqrt(acc) + config.rms_epsilon)
                )
        log.info(
            "restart %d: %d steps, final loss %.6f", restart, len(trace), trace[-1]
        )
        if best is None or trace[-1] < best[1][-1]:
            best = (weights, trace)

    weights, trace = best
    extracted = extract_program(weights, space)
    _audit_extraction(extracted, space, template, mask_circular)
    final_v = forward_chain(v0, weights, compiled)
    example_values = np.concatenate([final_v[pos], final_v[neg]])
    margin_violations = int(
        ((example_values >= SOFT_MARGIN[0]) & (example_values <= SOFT_MARGIN[1])).sum()
    )
    if margin_violations:
        log.warning(
            "%d example valuations inside the ambiguous margin %s; "
            "soft and crisp classifications may disagree",
            margin_violations,
            SOFT_MARGIN,
        )
    return TrainedModel(
        weights=weights,
        loss_trace=trace,
        extracted=extracted,
        config=config,
        template=template,
        space=space,
        language=language,
        margin_violations=margin_violations,
    )


def _audit_extraction(program: Program, space: CandidateSpace, template: ProgramTemplate, mask_circular: bool):
    for p in space.predicates:
        extracted = program.clauses_for(p)
        if not 1 <= len(extracted) <= 2:
            raise AssertionError(f"extraction produced {len(extracted)} clauses for {p}")
        for clause in extracted:
            if clause not in space.slot1[p.name] and clause not in space.slot2[p.name]:
                raise AssertionError(f"extracted clause {clause} is not a candidate")
    if mask_circular and not check_extended_circularity(
        program, template.target, template.prevent_target_recursion
    ):
        raise AssertionError("extracted program violates the extended circular restriction")


def soft_predictions(model: TrainedModel, fact_table) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Final valuations of a fact table's example atoms under the trained weights.

    Returns (positive values, negative values, full valuation); the fact
    table may have different constants from the training one.
    """
    language = training_language(fact_table.language, model.template)
    index = GroundIndex(language)
    compiled = compile_space(model.space, index)
    v0 = index.valuation_from_facts(fact_table.facts)
    final_v = forward_chain(v0, model.weights, compiled)
    pos, neg = example_indices(fact_table.examples, index)
    return final_v[pos], final_v[neg], final_v


def evaluate(model: TrainedModel, fact_table) -> metrics.MetricsReport:
    """Threshold the soft model at 0.5 on the example atoms and score it."""
    vp, vn, _ = soft_predictions(model, fact_table)
    predictions = list(vp > CLASSIFICATION_THRESHOLD) + list(vn > CLASSIFICATION_THRESHOLD)
    labels = [True] * len(vp) + [False] * len(vn)
    return metrics.report(metrics.confusion(predictions, labels))
