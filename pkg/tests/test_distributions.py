import math

import pytest
from hypothesis import given, strategies as st

from bitprob import distributions as D
from bitprob.compiler import compile_exponential, expo1_theta, flip_param
from bitprob.core import InferenceContext
from bitprob.fixedpoint import FormatError
from bitprob.oracle import naive_discretize, quadrature_cell_masses
from bitprob.query import expectation, pr, variance


def grid_masses(dist, ll, ul, bits):
    table = pr(dist).as_dict()
    step = (ul - ll) / 2 ** bits
    return [table.get(ll + k * step, 0.0) for k in range(2 ** bits)]


def test_adaptive_simpson_accuracy():
    assert D.adaptive_simpson(math.exp, 0.0, 1.0) == pytest.approx(math.e - 1, rel=1e-12)
    assert D.adaptive_simpson(lambda x: x ** 7, 0.0, 2.0) == pytest.approx(32.0, rel=1e-12)


def test_density_fn_checks_mass():
    with pytest.raises(D.QuadratureError):
        D.DensityFn(lambda x: 0.0, 0.0, 1.0).check()
    assert D.DensityFn(lambda x: 2.0, 0.0, 1.0).mass() == pytest.approx(2.0)


def test_general_gamma_examples():
    ctx = InferenceContext()
    u = D.general_gamma(ctx, 5, 0, 0.0, 0.0, 1.0)
    assert ctx.flip_count == 5
    assert grid_masses(u, 0, 1, 5) == [1 / 32] * 32
    lin = grid_masses(D.general_gamma(InferenceContext(), 4, 1, 0.0, 0.0, 1.0), 0, 1, 4)
    assert lin == pytest.approx([(2 * k + 1) / 256 for k in range(16)], abs=1e-12)
    with pytest.raises(FormatError):
        D.general_gamma(InferenceContext(), 3, 0, 0.0, 0.0, 3.0)


def test_fig13_weights_through_library():
    ctx = InferenceContext()
    D.general_gamma(ctx, 3, 0, -3.0, 0.0, 8.0)
    ws = sorted(ctx.weights.theta_by_id(v) for v in range(ctx.store.num_vars)
                if ctx.store.label(v) in ctx.weights)
    assert ws == pytest.approx([6.144e-6, 0.00247, 0.0474], rel=2e-3)


def test_exponential_equals_general_gamma():
    a = pr(D.exponential(InferenceContext(), 6, 3.0, 0.0, 1.0)).entries
    b = pr(D.general_gamma(InferenceContext(), 6, 0, -3.0, 0.0, 1.0)).entries
    assert a == b
    with pytest.raises(ValueError):
        D.exponential(InferenceContext(), 6, -1.0, 0.0, 1.0)


def test_laplace_named():
    bits = 5
    ctx = InferenceContext()
    x = D.laplace(ctx, bits, 0.0, 1.0, -2.0, 2.0)
    assert ctx.flip_count == 2 * bits - 1
    got = grid_masses(x, -2.0, 2.0, bits)
    assert math.fsum(got) == pytest.approx(1.0, abs=1e-12)
    ref = quadrature_cell_masses(lambda t: math.exp(-abs(t)), bits, -2.0, 2.0)
    assert got == pytest.approx(list(ref), abs=1e-9)
    with pytest.raises(ValueError):
        D.laplace(InferenceContext(), bits, 0.0, 1.0, -2.0, 6.0)


def test_sound_named_families():
    got = grid_masses(D.beta(InferenceContext(), 4, 1, 3), 0, 1, 4)
    ref = naive_discretize(lambda t: (1 - t) ** 2, 4).masses
    assert got == pytest.approx(list(ref), abs=1e-10)
    got = grid_masses(D.chi_squared(InferenceContext(), 5, 4, 0.0, 16.0), 0, 16, 5)
    ref = quadrature_cell_masses(lambda t: t * math.exp(-t / 2), 5, 0.0, 16.0)
    assert got == pytest.approx(list(ref), abs=1e-10)
    got = grid_masses(D.polynomial(InferenceContext(), 4, 2, 1.0, 2.0), 1, 2, 4)
    ref = quadrature_cell_masses(lambda t: t * t, 4, 1.0, 2.0)
    assert got == pytest.approx(list(ref), abs=1e-10)


def test_piecewise_constant_density_is_uniform():
    fits = D.fit_pieces(D.DensityFn(lambda x: 1.0, 0.0, 1.0), 6, 4, "exponential")
    assert all(f.param == 0.0 for f in fits)
    x = D.bitblast(InferenceContext(), 6, D.DensityFn(lambda x: 1.0, 0.0, 1.0), 4)
    assert grid_masses(x, 0, 1, 6) == pytest.approx([1 / 64] * 64, abs=1e-14)


def test_single_piece_reproduces_sound_exponential():
    bits = 6
    dens = D.DensityFn(lambda x: math.exp(-x), 0.0, 1.0)
    (fit,) = D.fit_pieces(dens, bits, 1, "exponential")
    assert fit.param == pytest.approx(-1.0, abs=1e-9)
    ctx = InferenceContext()
    D.bitblast(ctx, bits, dens, 1)
    ref = InferenceContext()
    compile_exponential(ref, -1.0, bits)
    got = [ctx.weights.theta_by_id(v) for v in range(ctx.store.num_vars)
           if ctx.store.label(v) in ctx.weights]
    want = [flip_param(-1.0, i) for i in range(1, bits + 1)]
    assert got == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("kind", D.PIECE_KINDS)
def test_piece_fits_weights_and_ratios(kind):
    dens = D.gaussian_density(0.0, 1.0, -8.0, 8.0)
    fits = D.fit_pieces(dens, 8, 16, kind)
    assert math.fsum(f.weight for f in fits) == pytest.approx(1.0, abs=1e-12)
    checked = 0
    for f in fits:
        if f.weight == 0 or not math.isfinite(f.target_ratio):
            continue
        reach = 2.0 * f.cells - 1.0 if kind == "linear" else math.exp(600)
        if 1.0 / reach < f.target_ratio < reach:
            assert f.model_ratio() == pytest.approx(f.target_ratio, rel=1e-9)
            checked += 1
        elif kind == "linear":
            # out of reach: the fit saturates at the steepest ramp
            assert f.model_ratio() == pytest.approx(reach if f.target_ratio > 1 else 1 / reach)
    assert checked >= 4


def test_piece_count_validation():
    dens = D.DensityFn(lambda x: 1.0, 0.0, 1.0)
    with pytest.raises(FormatError):
        D.fit_pieces(dens, 6, 3, "exponential")
    with pytest.raises(ValueError):
        D.fit_pieces(dens, 2, 8, "exponential")
    with pytest.raises(ValueError):
        D.fit_pieces(dens, 6, 4, "cubic")


def test_zero_mass_piece_is_constant():
    dens = D.DensityFn(lambda x: 1.0 if x < 0.5 else 0.0, 0.0, 1.0)
    fits = D.fit_pieces(dens, 4, 4, "exponential")
    assert [f.weight for f in fits][2:] == [0.0, 0.0]
    x = D.bitblast(InferenceContext(), 4, dens, 4)
    assert max(v for v, _ in pr(x).entries) < 0.5


def test_gaussian_default_range():
    assert D.default_gaussian_range(0.0, 1.0) == (-8.0, 8.0)
    assert D.default_gaussian_range(135.0, 2.0) == (119.0, 151.0)


def test_gaussian_moments():
    ctx = InferenceContext()
    x = D.gaussian(ctx, 14, 0.0, 1.0, -8.0, 8.0, 16)
    assert abs(expectation(x)) < 1e-3
    ctx = InferenceContext()
    y = D.gaussian(ctx, 7, 0.0, 1.0, -8.0, 8.0, 16)
    assert variance(y) == pytest.approx(pr(y).var(), abs=1e-10)


def test_gaussian_linear_pieces():
    x = D.gaussian(InferenceContext(), 8, 0.0, 1.0, -8.0, 8.0, 16, "linear")
    t = pr(x)
    assert t.total() == pytest.approx(1.0, abs=1e-12)
    assert t.var() == pytest.approx(1.0, abs=0.05)


def test_student_t_is_symmetric():
    x = D.student_t(InferenceContext(), 7, 3.0, -8.0, 8.0)
    t = pr(x).as_dict()
    step = 16 / 128
    for k in range(1, 64):
        assert t[k * step - step] == pytest.approx(t[-k * step], rel=1e-6)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        D.gamma(InferenceContext(), 4, -1.0, 1.0, 0.0, 4.0)
    with pytest.raises(ValueError):
        D.gaussian(InferenceContext(), 4, 0.0, 0.0, -8.0, 8.0)
    with pytest.raises(ValueError):
        D.student_t(InferenceContext(), 4, 0.0, -8.0, 8.0)


@given(st.floats(-3, 3), st.floats(0.3, 2.0))
def test_gaussian_piece_weights_normalized(mu, sigma):
    ll, ul = D.default_gaussian_range(mu, sigma)
    fits = D.fit_pieces(D.gaussian_density(mu, sigma, ll, ul), 8, 8, "exponential")
    assert math.fsum(f.weight for f in fits) == pytest.approx(1.0, abs=1e-12)
