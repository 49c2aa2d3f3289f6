import math

import mpmath
import pytest
from hypothesis import given, strategies as st

from bitprob.bdd import node_count
from bitprob.compiler import (GeneralizedGamma, MixedGamma, bit_theta, compile_exponential,
                              compile_gamma1, compile_general_gamma, compile_laplace,
                              compile_mixture, compile_on_interval, expo1_theta, flip_param,
                              unif_obs)
from bitprob.core import InferenceContext
from bitprob.fixedpoint import FormatError
from bitprob.oracle import gamma_cell_masses, naive_discretize
from bitprob.query import pr


def masses(dist, n=None):
    table = pr(dist).as_dict()
    f = dist.format
    n = n or 2 ** f.total_bits
    return [table.get(f.value_of(k), 0.0) for k in range(n)]


def unit_masses(dist):
    b = dist.format.total_bits
    table = pr(dist).as_dict()
    return [table.get(k / 2 ** b, 0.0) for k in range(2 ** b)]


def test_flip_param_values():
    assert all(flip_param(0, i) == 0.5 for i in range(1, 10))
    with mpmath.workdps(30):
        ref = float(mpmath.exp(-1.5) / (1 + mpmath.exp(-1.5)))
    assert flip_param(-3, 1) == pytest.approx(ref, rel=1e-14)
    assert bit_theta(-3, 4) == pytest.approx(6.144e-6, rel=1e-3)
    # extreme arguments saturate instead of overflowing
    assert flip_param(-5000, 1) == 0.0
    assert flip_param(5000, 1) == 1.0


def test_expo0_masses():
    ctx = InferenceContext()
    assert unit_masses(compile_exponential(ctx, 0.0, 2)) == [0.25] * 4
    e = math.e
    m = unit_masses(compile_exponential(InferenceContext(), 1.0, 1))
    assert m[1] == pytest.approx((e - math.sqrt(e)) / (e - 1), abs=1e-15)
    got = unit_masses(compile_exponential(InferenceContext(), -3.0, 3))
    assert got == pytest.approx(list(gamma_cell_masses(0, -3.0, 3)), abs=1e-12)


def test_unif_obs_reweights_by_cell_index():
    for b in (1, 2, 3):
        ctx = InferenceContext()
        x = compile_exponential(ctx, 0.0, b)
        unif_obs(ctx, x, b)
        n = 2 ** b
        expect = [k / (n * (n - 1) / 2) for k in range(n)]
        assert unit_masses(x) == pytest.approx(expect, abs=1e-15)
        assert ctx.evidence_wmc() == pytest.approx((n - 1) / (2 * n), abs=1e-15)


def test_unif_obs_checks_format():
    ctx = InferenceContext()
    x = compile_exponential(ctx, 0.0, 3)
    with pytest.raises(FormatError):
        unif_obs(ctx, x, 4)


def closed_form_theta(beta, b):
    with mpmath.workdps(50):
        B = mpmath.mpf(beta)
        x = B * mpmath.ldexp(mpmath.mpf(1), -b)
        num = (mpmath.exp(x) * (x - 1) + 1) * (1 - mpmath.exp(B))
        den = (1 - mpmath.exp(x)) * (mpmath.exp(B) * (B - 1) + 1)
        return float(num / den)


@pytest.mark.parametrize("beta,b", [(1.0, 1), (-4.0, 4), (3.0, 8), (-5.0, 2), (0.3, 30)])
def test_expo1_theta_matches_closed_form(beta, b):
    assert expo1_theta(beta, b) == pytest.approx(closed_form_theta(beta, b), rel=1e-12)


def test_expo1_theta_values():
    assert expo1_theta(1.0, 1) == pytest.approx(0.46522, abs=5e-6)
    assert expo1_theta(0.0, 3) == 0.125
    assert expo1_theta(1e-8, 3) == pytest.approx(0.125, abs=1e-9)
    assert expo1_theta(-1e-8, 3) == pytest.approx(0.125, abs=1e-9)


def test_gamma1_masses_and_flips():
    ctx = InferenceContext()
    x = compile_gamma1(ctx, -4.0, 4)
    assert ctx.flip_count == 13
    assert unit_masses(x) == pytest.approx(list(gamma_cell_masses(1, -4.0, 4)), abs=1e-10)
    q = unit_masses(compile_gamma1(InferenceContext(), 0.0, 2))
    assert q == pytest.approx([1 / 16, 3 / 16, 5 / 16, 7 / 16], abs=1e-14)


def test_general_gamma_examples():
    a = unit_masses(compile_general_gamma(InferenceContext(), 0, -2.0, 3))
    b = unit_masses(compile_exponential(InferenceContext(), -2.0, 3))
    assert a == b
    m = unit_masses(compile_general_gamma(InferenceContext(), 2, 0.0, 2))
    assert m == pytest.approx([1 / 64, 7 / 64, 19 / 64, 37 / 64], abs=1e-12)
    m3 = unit_masses(compile_general_gamma(InferenceContext(), 3, -2.0, 4))
    ref = naive_discretize(lambda t: t ** 3 * math.exp(-2 * t), 4).masses
    assert m3 == pytest.approx(list(ref), abs=1e-9)
    with pytest.raises(ValueError):
        compile_general_gamma(InferenceContext(), -1, 0.0, 2)


def test_mixture_examples():
    half = MixedGamma([GeneralizedGamma(0, 0.0)] * 2, [0.5, 0.5])
    assert unit_masses(compile_mixture(InferenceContext(), half, 3)) == pytest.approx([1 / 8] * 8)
    mg = MixedGamma([GeneralizedGamma(0, 2.0), GeneralizedGamma(1, -1.0)], [0.25, 0.75])
    ctx = InferenceContext()
    got = unit_masses(compile_mixture(ctx, mg, 3))
    ref = naive_discretize(mg, 3).masses
    assert got == pytest.approx(list(ref), abs=1e-10)
    # one guard plus Expo0 (3) plus Expo1 (10)
    assert ctx.flip_count == 1 + 3 + 10
    with pytest.raises(ValueError):
        MixedGamma([GeneralizedGamma(0, 0.0)] * 2, [0.5, 0.6])


def test_on_interval_and_fig13_weights():
    ctx = InferenceContext()
    x = compile_on_interval(ctx, MixedGamma.single(0, -3.0), 3, 0.0, 8.0)
    thetas = sorted(ctx.weights.theta_by_id(v) for v in range(ctx.store.num_vars)
                    if ctx.store.label(v) in ctx.weights)
    assert thetas == pytest.approx([6.144e-6, 0.002473, 0.047426], rel=1e-3)
    assert node_count(ctx.store, x.bits) == 3
    assert [v for v, _ in pr(x).entries] == list(range(8))
    with pytest.raises(FormatError):
        compile_on_interval(InferenceContext(), MixedGamma.single(0, 0.0), 3, 0.0, 3.0)


def test_laplace_construction():
    b = 4
    ctx = InferenceContext()
    x = compile_laplace(ctx, 0.0, 1.0, 2.0, b)
    assert ctx.flip_count == 2 * b + 1
    table = pr(x).as_dict()
    step = 2.0 / 2 ** b

    def cdf(t):
        return 0.5 * math.exp(t) if t < 0 else 1 - 0.5 * math.exp(-t)
    z = cdf(2.0) - cdf(-2.0)
    for k in range(2 ** (b + 1)):
        lo = -2.0 + k * step
        assert table.get(lo, 0.0) == pytest.approx((cdf(lo + step) - cdf(lo)) / z, abs=1e-9)


@given(st.integers(0, 2), st.sampled_from([-5.0, -1.0, 0.0, 1.0, 3.0]), st.integers(1, 6))
def test_total_mass_is_one(alpha, beta, b):
    ctx = InferenceContext()
    x = compile_general_gamma(ctx, alpha, beta, b)
    assert pr(x).total() == pytest.approx(1.0, abs=1e-12)
