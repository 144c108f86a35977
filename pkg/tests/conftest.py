import numpy as np
import pytest

from dilp.clausegen import ProgramTemplate, RuleTemplate, build_candidate_space
from dilp.inference import GroundIndex, compile_space
from dilp.logic import Constant, Language, Predicate, PredicateKind

TARGET = PredicateKind.TARGET
AUX = PredicateKind.AUXILIARY


def arity1_language(ext_names, n_constants=4, target_name="t", aux_names=()):
    ext = tuple(Predicate(n, 1) for n in ext_names)
    target = Predicate(target_name, 1, TARGET)
    aux = tuple(Predicate(n, 1, AUX) for n in aux_names)
    constants = tuple(Constant(str(i)) for i in range(n_constants))
    return Language(ext + (target,) + aux, constants)


def uniform_template(language, n_exists=0, int_flag=True, steps=2, prevent=False):
    rt = RuleTemplate(n_exists, int_flag)
    intensional = tuple(p for p in language.predicates if p.is_intensional)
    target = language.target
    aux = tuple(p for p in intensional if p != target)
    return ProgramTemplate(target, aux, {p: (rt, rt) for p in intensional}, steps, prevent)


def compile_problem(language, template, mask_circular=True):
    space = build_candidate_space(template, language, mask_circular=mask_circular)
    index = GroundIndex(language)
    return space, index, compile_space(space, index)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
