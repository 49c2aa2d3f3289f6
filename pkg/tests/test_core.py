import random

import pytest
from hypothesis import given, strategies as st

from bitprob.bdd import FALSE, TRUE
from bitprob.core import BoolRv, InferenceContext, ZeroEvidenceError


def test_flip_weights_and_count():
    ctx = InferenceContext()
    assert ctx.probability(ctx.flip(0.5)) == 0.5
    assert ctx.probability(ctx.flip(0.0)) == 0.0
    f1, f2 = ctx.flip(0.3), ctx.flip(0.3)
    assert ctx.probability(f1 & f2) == pytest.approx(0.09)
    assert ctx.flip_count == 4


@pytest.mark.parametrize("theta", [-0.1, 1.5, float("nan")])
def test_flip_rejects_bad_parameter(theta):
    with pytest.raises(ValueError):
        InferenceContext().flip(theta)


def test_observe_true_is_noop():
    ctx = InferenceContext()
    f = ctx.flip(0.7)
    ctx.observe(ctx.const(True))
    assert ctx.evidence == TRUE
    assert ctx.probability(f) == pytest.approx(0.7)


def test_observe_self_and_disjunction():
    ctx = InferenceContext()
    f = ctx.flip(0.25)
    ctx.observe(f)
    assert ctx.probability(f) == 1.0

    ctx = InferenceContext()
    f1, f2 = ctx.flip(0.5), ctx.flip(0.5)
    ctx.observe(f1 | f2)
    assert ctx.probability(f1) == pytest.approx(2 / 3)


def test_contradiction_is_zero_evidence():
    ctx = InferenceContext()
    f = ctx.flip(0.5)
    ctx.observe(f)
    ctx.observe(~f)
    with pytest.raises(ZeroEvidenceError, match="zero evidence"):
        ctx.probability(f)


def test_tiny_evidence_is_legal():
    ctx = InferenceContext()
    fs = [ctx.flip(1e-30) for _ in range(5)]
    for f in fs:
        ctx.observe(f)
    assert ctx.evidence_wmc() > 0
    assert ctx.probability(fs[0]) == 1.0


def test_ite_bool():
    ctx = InferenceContext()
    t, e = ctx.flip(0.5), ctx.flip(0.5)
    assert ctx.ite_bool(ctx.const(True), t, e).formula == t.formula
    g = ctx.flip(0.2)
    assert ctx.probability(ctx.ite_bool(g, ctx.const(True), ctx.const(False))) == pytest.approx(0.2)
    assert ctx.ite_bool(g, t, t).formula == t.formula


@given(st.integers(0, 10 ** 9))
def test_total_probability(seed):
    rng = random.Random(seed)
    ctx = InferenceContext()
    fs = [ctx.flip(rng.uniform(0.05, 0.95)) for _ in range(6)]

    def rand_event():
        a, b, c = rng.sample(fs, 3)
        return ctx.ite_bool(a, b, ~c) | (rng.choice(fs) & rng.choice(fs))
    ctx.observe(rand_event() | fs[0])
    ev, g = rand_event(), rand_event()
    p = ctx.probability(ev)
    assert p == pytest.approx(ctx.probability(ev & g) + ctx.probability(ev & ~g), abs=1e-12)
    assert isinstance(ev, BoolRv)
