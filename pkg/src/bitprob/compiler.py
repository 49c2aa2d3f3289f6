"""Compile exponential-polynomial densities on [0, 1) into weighted coin flips.

A density proportional to x**alpha * exp(beta*x) is turned into a vector of
Boolean formulas whose induced distribution on the b-bit grid equals the
integral of the density over each grid cell. Only O(b) flips are used.

* alpha = 0: the density factorises over bits, one flip per bit.
* alpha >= 1: take the alpha-1 result X, condition a fresh uniform U < X
  (this multiplies each grid mass by its left endpoint), then mix with a
  correction that accounts for the part of each cell to the right of the
  endpoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import mpmath

from .core import GUARD, Block, BoolRv, InferenceContext
from .fixedpoint import (BitVectorDist, FixedPointFormat, FormatError, constant, less_than, mux,
                         shift_scale)

_MP_DPS = 40


# ------------------------------------------------------------------ parameters
@dataclass(frozen=True)
class GeneralizedGamma:
    alpha: int
    beta: float

    def __post_init__(self) -> None:
        if int(self.alpha) != self.alpha or self.alpha < 0:
            raise ValueError(f"alpha must be a nonnegative integer, got {self.alpha}")

    def density(self, x: float) -> float:
        return x ** self.alpha * math.exp(self.beta * x)


@dataclass(frozen=True)
class MixedGamma:
    components: tuple[GeneralizedGamma, ...]
    weights: tuple[float, ...]

    def __init__(self, components: Sequence[GeneralizedGamma], weights: Sequence[float]):
        object.__setattr__(self, "components", tuple(components))
        object.__setattr__(self, "weights", tuple(float(w) for w in weights))
        if len(self.components) != len(self.weights) or not self.components:
            raise ValueError("need one weight per component")
        if any(not 0.0 <= w <= 1.0 for w in self.weights):
            raise ValueError("mixture weights must lie in [0, 1]")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {math.fsum(self.weights)}, not 1")

    @classmethod
    def single(cls, alpha: int, beta: float) -> "MixedGamma":
        return cls([GeneralizedGamma(alpha, beta)], [1.0])


@dataclass
class Site:
    """Where new flips go: a block plus the exponent of the leading bit's weight."""
    block: Block
    top_exp: int = -1
    guard: float = GUARD

    def band(self, i: int) -> int:
        return self.top_exp - i


def _site(ctx: InferenceContext, site: Site | None) -> Site:
    return site if site is not None else Site(ctx.new_block())


# ------------------------------------------------------------- flip parameters
def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def flip_param(beta: float, i: int) -> float:
    """Probability that bit i (weight 2^-i) of an exponential(beta) sample on [0,1) is set."""
    if i < 1:
        raise ValueError("bit index starts at 1")
    return sigmoid(math.ldexp(beta, -i))


def bit_theta(beta: float, weight: float) -> float:
    """Same rule for a bit of arbitrary numeric weight."""
    return sigmoid(beta * weight)


def _edge_ratio(x: float) -> float:
    """(e^x (x-1) + 1) / (e^x - 1), evaluated without cancellation or overflow."""
    if x == 0.0:
        return 0.0
    if abs(x) < 0.5:
        num = 0.0
        term = x
        n = 1
        while True:
            n += 1
            term *= x / n
            add = (n - 1) * term
            num += add
            if abs(add) < 1e-18 * abs(num):
                break
        return num / math.expm1(x)
    if x > 0:
        e = math.exp(-x)
        return (x - 1.0 + e) / -math.expm1(-x)
    return (math.exp(x) * (x - 1.0) + 1.0) / math.expm1(x)


def expo1_theta(beta: float, b: int) -> float:
    """Mixing weight of the correction branch for density x e^{beta x} at b bits."""
    delta = math.ldexp(1.0, -b)
    if beta == 0.0:
        return delta
    return _edge_ratio(beta * delta) / _edge_ratio(beta)


# --------------------------------------------------------- exact scalar pieces
def _mp_edge_integral(r: int, beta, length):
    """Integral of s^r e^{beta s} over [0, length] by its power series (mpmath)."""
    x = beta * length
    total = mpmath.mpf(0)
    term = mpmath.mpf(1)
    n = 0
    while True:
        add = term / (r + n + 1)
        total += add
        n += 1
        term = term * x / n
        if n > abs(x) + 5 and abs(term) < mpmath.mpf(10) ** (-_MP_DPS) * abs(total):
            break
    return length ** (r + 1) * total


def _bit_moments(beta, b: int, order: int) -> list:
    """E[X^j], j = 0..order, for X the b-bit exponential(beta) grid variable."""
    m = [mpmath.mpf(1)] + [mpmath.mpf(0)] * order
    for i in range(1, b + 1):
        w = mpmath.ldexp(mpmath.mpf(1), -i)
        x = beta * w
        p = 1 / (1 + mpmath.exp(-x)) if x >= 0 else mpmath.exp(x) / (1 + mpmath.exp(x))
        new = []
        for j in range(order + 1):
            acc = m[j]
            for k in range(1, j + 1):
                acc += mpmath.binomial(j, k) * m[j - k] * w ** k * p
            new.append(acc)
        m = new
    return m


def correction_weights(alpha: int, beta: float, b: int) -> tuple[float, list[float]]:
    """Mixing weight of the correction branch and the weights of its components.

    The cell mass of x^alpha e^{beta x} splits into (left endpoint) times the
    cell mass of x^(alpha-1) e^{beta x}, plus a remainder. Expanding the
    remainder binomially shows it is a nonnegative combination of the
    grid-point families x_k^j e^{beta x_k}, j < alpha.
    """
    if alpha < 1:
        raise ValueError("correction exists only for alpha >= 1")
    with mpmath.workdps(_MP_DPS + int(abs(beta)) // 2):
        bm = mpmath.mpf(beta)
        delta = mpmath.ldexp(mpmath.mpf(1), -b)
        log_s0 = mpmath.fsum(mpmath.log1p(mpmath.exp(bm * mpmath.ldexp(mpmath.mpf(1), -i)))
                             for i in range(1, b + 1))
        moments = _bit_moments(bm, b, alpha - 1)
        z = _mp_edge_integral(alpha, bm, mpmath.mpf(1))
        parts = []
        for j in range(alpha):
            mass = mpmath.binomial(alpha - 1, j) * _mp_edge_integral(alpha - j, bm, delta)
            parts.append(mass * mpmath.exp(log_s0) * moments[j])
        total = mpmath.fsum(parts)
        theta = float(total / z)
        weights = [float(p / total) for p in parts]
    return theta, weights


# ---------------------------------------------------------------- compilation
def _unit_format(b: int) -> FixedPointFormat:
    return FixedPointFormat(b, b, False)


def compile_exponential(ctx: InferenceContext, beta: float, b: int,
                        site: Site | None = None) -> BitVectorDist:
    """b independent flips; cell masses equal the integral of e^{beta x} per cell."""
    if b < 1:
        raise ValueError("need at least one bit")
    site = _site(ctx, site)
    bits = []
    for i in range(1, b + 1):
        lab = ctx.flip_var(flip_param(beta, i), block=site.block, band=site.band(i - 1))
        bits.append(ctx.store.literal(lab))
    return BitVectorDist(ctx, _unit_format(b), bits, site.block)


def uniform_like(ctx: InferenceContext, x: BitVectorDist, site: Site) -> BitVectorDist:
    """Fresh uniform over x's format, each flip placed right after x's same-weight bits."""
    bits = []
    for i in range(x.format.total_bits):
        lab = ctx.flip_var(0.5, block=site.block, band=site.band(i))
        bits.append(ctx.store.literal(lab))
    return BitVectorDist(ctx, x.format, bits, site.block)


def _leaf(ctx: InferenceContext, site: Site) -> Site:
    """A fresh block for one exponential and the uniforms compared against it."""
    return Site(ctx.new_block(), site.top_exp)


def _below_formula(ctx: InferenceContext, x: BitVectorDist, site: Site | None) -> int:
    # a mixture is split per branch, each with its own uniform; the
    # reweighting of x is the same and every comparator stays in one block
    if x.branches is not None:
        g, t, e = x.branches
        return ctx.store.apply_ite(g, _below_formula(ctx, t, None), _below_formula(ctx, e, None))
    if site is None:
        site = Site(x.block or ctx.new_block(), x.format.exponent(0))
    u = uniform_like(ctx, x, site)
    return less_than(u, x).formula


def unif_obs(ctx: InferenceContext, x: BitVectorDist, b: int | None = None,
             site: Site | None = None) -> BoolRv:
    """Observe a fresh uniform U < x; reweights each grid mass of x by its left endpoint."""
    if b is not None and (x.format.total_bits != b or x.format.frac_bits != b or x.format.signed):
        raise FormatError("unif_obs expects a b-bit value on [0, 1)")
    cond = BoolRv(_below_formula(ctx, x, site), ctx)
    ctx.observe(cond)
    return cond


def compile_gamma1(ctx: InferenceContext, beta: float, b: int,
                   site: Site | None = None) -> BitVectorDist:
    """x e^{beta x}: conditioned exponential mixed with a fresh exponential; 3b+1 flips.

    Guards live in ``site``'s block; the two exponentials get blocks of their
    own, the unconditioned one ordered first.
    """
    site = _site(ctx, site)
    late = _leaf(ctx, site)
    early = _leaf(ctx, site)
    y1 = compile_exponential(ctx, beta, b, early)
    unif_obs(ctx, y1, b, early)
    y2 = compile_exponential(ctx, beta, b, late)
    g = ctx.flip(expo1_theta(beta, b), block=site.block, band=site.guard)
    return mux(g, y2, y1)


def compile_grid_gamma(ctx: InferenceContext, j: int, beta: float, b: int,
                       site: Site | None = None) -> BitVectorDist:
    """Grid masses proportional to x_k^j e^{beta x_k} at the left endpoints x_k."""
    site = _site(ctx, site)
    x = compile_exponential(ctx, beta, b, site)
    for _ in range(j):
        unif_obs(ctx, x, b, site)
    return x


def _mix(ctx: InferenceContext, weights: Sequence[float],
         build: Callable[[int], BitVectorDist], site: Site) -> BitVectorDist:
    """Right fold: the last component is chosen with its weight, the rest renormalised."""
    n = len(weights)
    if n == 1:
        return build(0)
    a_last = min(max(weights[-1], 0.0), 1.0)
    g = ctx.flip(a_last, block=site.block, band=site.guard)
    last = build(n - 1)
    rest = 1.0 - a_last
    if rest > 0.0:
        prefix = [w / rest for w in weights[:-1]]
    else:
        prefix = [1.0 / (n - 1)] * (n - 1)
    head = _mix(ctx, prefix, build, site)
    return mux(g, last, head)


def compile_general_gamma(ctx: InferenceContext, alpha: int, beta: float, b: int,
                          site: Site | None = None) -> BitVectorDist:
    """Cell-exact compilation of x^alpha e^{beta x} on [0, 1)."""
    if alpha < 0 or int(alpha) != alpha:
        raise ValueError(f"alpha must be a nonnegative integer, got {alpha}")
    site = _site(ctx, site)
    if alpha == 0:
        return compile_exponential(ctx, beta, b, site)
    if alpha == 1:
        return compile_gamma1(ctx, beta, b, site)
    x = compile_general_gamma(ctx, alpha - 1, beta, b, site)
    unif_obs(ctx, x, b, site)
    theta, comp = correction_weights(alpha, beta, b)
    corr = _mix(ctx, comp, lambda j: compile_grid_gamma(ctx, j, beta, b, _leaf(ctx, site)), site)
    g = ctx.flip(theta, block=site.block, band=site.guard)
    return mux(g, corr, x)


def compile_mixture(ctx: InferenceContext, mg: MixedGamma, b: int,
                    site: Site | None = None) -> BitVectorDist:
    site = _site(ctx, site)
    comps = mg.components
    return _mix(ctx, mg.weights,
                lambda k: compile_general_gamma(ctx, comps[k].alpha, comps[k].beta, b, site), site)


def _log2_exact(width: float) -> int:
    m, e = math.frexp(width)
    if width <= 0 or m != 0.5:
        raise FormatError(f"interval width {width} is not a power of two")
    return e - 1


def interval_format(lo: float, width: float, b: int) -> FixedPointFormat:
    """Smallest format whose grid contains lo + width*k/2^b for every k < 2^b."""
    k = _log2_exact(width)
    frac = max(b - k, 0)
    step = math.ldexp(1.0, -frac)
    if (lo / step) != math.floor(lo / step):
        frac2 = frac
        while (lo * 2.0 ** frac2) != math.floor(lo * 2.0 ** frac2):
            frac2 += 1
        frac = frac2
    hi = lo + width
    signed = lo < 0
    ib = 0
    while True:
        if ib + frac > 0:
            f = FixedPointFormat(ib + frac, frac, signed)
            if f.lo <= lo and hi <= f.hi:
                return f
        ib += 1


def compile_on_interval(ctx: InferenceContext, mg: MixedGamma, b: int, lo: float, width: float,
                        fmt: FixedPointFormat | None = None,
                        site: Site | None = None) -> BitVectorDist:
    """Mixed-gamma density on [lo, lo+width); each beta is per unit of the original axis."""
    k = _log2_exact(width)
    if site is None:
        site = Site(ctx.new_block(), k - 1)
    scaled = MixedGamma([GeneralizedGamma(c.alpha, c.beta * width) for c in mg.components],
                        mg.weights)
    unit = compile_mixture(ctx, scaled, b, site)
    if fmt is None:
        fmt = interval_format(lo, width, b)
    return shift_scale(unit, width, lo, fmt)


def compile_laplace(ctx: InferenceContext, mu: float, scale: float, r: float, b: int,
                    fmt: FixedPointFormat | None = None,
                    site: Site | None = None) -> BitVectorDist:
    """Laplace(mu, scale) truncated to [mu-r, mu+r): two exponential halves, 2b+1 flips."""
    k = _log2_exact(r)
    if scale <= 0:
        raise ValueError("scale must be positive")
    if site is None:
        site = Site(ctx.new_block(), k - 1)
    if fmt is None:
        fmt = interval_format(mu - r, 2 * r, b + 1)
    g = ctx.flip(0.5, block=site.block, band=site.guard)
    p1 = compile_exponential(ctx, -r / scale, b, site)
    p2 = compile_exponential(ctx, r / scale, b, site)
    right = shift_scale(p1, r, mu, fmt)
    left = shift_scale(p2, r, mu - r, fmt)
    return mux(g, right, left)


def constant_dist(ctx: InferenceContext, value: float, fmt: FixedPointFormat) -> BitVectorDist:
    return constant(ctx, value, fmt)
