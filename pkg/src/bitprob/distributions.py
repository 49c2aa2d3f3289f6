"""User-facing distributions over fixed-point numbers.

Sound constructors route through the mixed-gamma compiler. Anything else is
approximated piecewise: the interval is cut into equal pieces, each piece
gets its exact probability mass and a one-parameter shape (exponential or
linear) fitted so that the ratio of its last to first grid-cell mass matches
the true density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import mpmath

from .compiler import (GeneralizedGamma, MixedGamma, Site, _log2_exact, _mp_edge_integral,
                       compile_exponential, compile_gamma1, compile_laplace, compile_on_interval,
                       interval_format)
from .core import InferenceContext
from .fixedpoint import BitVectorDist, FixedPointFormat, complement, constant, mux, shift_scale

PIECE_KINDS = ("exponential", "linear")


class QuadratureError(ArithmeticError):
    pass


# ------------------------------------------------------------------ quadrature
def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     rtol: float = 1e-12, max_depth: int = 60) -> float:
    """Integral of f over [a, b] by adaptive Simpson with Richardson correction."""
    if b <= a:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    # crude scale for the relative target; refined estimates replace it below
    probe = [f(a + (b - a) * k / 16.0) for k in range(17)]
    scale = max(abs(whole), (b - a) * max(abs(v) for v in probe) * 1e-3)
    if scale == 0.0:
        return 0.0
    tol = rtol * scale
    parts: list[float] = []

    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) * (flo + 4.0 * flm + fmid) / 6.0
        right = (hi - mid) * (fmid + 4.0 * frm + fhi) / 6.0
        diff = left + right - est
        if depth >= max_depth or abs(diff) <= 15.0 * eps:
            parts.append(left + right + diff / 15.0)
            continue
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
    return math.fsum(parts)


# --------------------------------------------------------------------- density
@dataclass(frozen=True)
class DensityFn:
    evaluator: Callable[[float], float]
    ll: float
    ul: float

    def __call__(self, x: float) -> float:
        return self.evaluator(x)

    def mass(self, a: float | None = None, b: float | None = None) -> float:
        return adaptive_simpson(self.evaluator, self.ll if a is None else a,
                                self.ul if b is None else b)

    def check(self) -> float:
        total = self.mass()
        if not math.isfinite(total) or total <= 0.0:
            raise QuadratureError(f"density has no usable mass on [{self.ll}, {self.ul}): {total}")
        return total


def _check_interval(ll: float, ul: float) -> float:
    width = ul - ll
    _log2_exact(width)
    return width


# ----------------------------------------------------------------- sound path
def _shifted_gamma(alpha: int, beta: float, ll: float, width: float) -> MixedGamma:
    """x^alpha e^{beta x} on [ll, ll+width) as a mixture in the local coordinate (ll >= 0)."""
    if alpha == 0 or ll == 0.0:
        return MixedGamma.single(alpha, beta)
    if ll < 0:
        raise ValueError("power densities need a nonnegative lower bound")
    with mpmath.workdps(40):
        c = mpmath.mpf(beta) * width
        raw = [mpmath.binomial(alpha, k) * mpmath.mpf(ll) ** (alpha - k) * mpmath.mpf(width) ** k
               * _mp_edge_integral(k, c, mpmath.mpf(1)) for k in range(alpha + 1)]
        total = mpmath.fsum(raw)
        weights = [float(r / total) for r in raw]
    return MixedGamma([GeneralizedGamma(k, beta) for k in range(alpha + 1)], weights)


def general_gamma(ctx: InferenceContext, bits: int, alpha: int, beta: float,
                  ll: float, ul: float, site: Site | None = None) -> BitVectorDist:
    """Density (x-ll)^alpha e^{beta x} on [ll, ul), compiled exactly."""
    width = _check_interval(ll, ul)
    return compile_on_interval(ctx, MixedGamma.single(alpha, beta), bits, ll, width, site=site)


def mixed_gamma(ctx: InferenceContext, bits: int, mg: MixedGamma, ll: float, ul: float,
                site: Site | None = None) -> BitVectorDist:
    width = _check_interval(ll, ul)
    return compile_on_interval(ctx, mg, bits, ll, width, site=site)


def uniform(ctx: InferenceContext, bits: int, ll: float, ul: float,
            site: Site | None = None) -> BitVectorDist:
    return general_gamma(ctx, bits, 0, 0.0, ll, ul, site)


def exponential(ctx: InferenceContext, bits: int, rate: float, ll: float, ul: float,
                site: Site | None = None) -> BitVectorDist:
    if rate <= 0:
        raise ValueError("rate must be positive")
    return general_gamma(ctx, bits, 0, -rate, ll, ul, site)


def gamma(ctx: InferenceContext, bits: int, shape: float, rate: float, ll: float, ul: float,
          site: Site | None = None, **piecewise) -> BitVectorDist:
    """Integer shapes compile exactly; others fall back to pieces."""
    if shape <= 0 or rate <= 0:
        raise ValueError("shape and rate must be positive")
    if float(shape).is_integer() and ll >= 0:
        width = _check_interval(ll, ul)
        mg = _shifted_gamma(int(shape) - 1, -rate, ll, width)
        return compile_on_interval(ctx, mg, bits, ll, width, site=site)
    k = shape

    def dens(x: float) -> float:
        return x ** (k - 1) * math.exp(-rate * x) if x > 0 else 0.0
    return bitblast(ctx, bits, DensityFn(dens, ll, ul), site=site, **piecewise)


def chi_squared(ctx: InferenceContext, bits: int, k: float, ll: float, ul: float,
                site: Site | None = None, **piecewise) -> BitVectorDist:
    if k <= 0:
        raise ValueError("degrees of freedom must be positive")
    return gamma(ctx, bits, k / 2.0, 0.5, ll, ul, site, **piecewise)


def polynomial(ctx: InferenceContext, bits: int, n: int, ll: float, ul: float,
               site: Site | None = None) -> BitVectorDist:
    """Density proportional to x^n."""
    if n < 0 or int(n) != n:
        raise ValueError("polynomial degree must be a nonnegative integer")
    width = _check_interval(ll, ul)
    return compile_on_interval(ctx, _shifted_gamma(int(n), 0.0, ll, width), bits, ll, width,
                               site=site)


def beta(ctx: InferenceContext, bits: int, a: float, b: float, ll: float = 0.0, ul: float = 1.0,
         site: Site | None = None, **piecewise) -> BitVectorDist:
    """Beta(a, b) stretched onto [ll, ul). Exact when a or b is 1 and the other an integer."""
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    width = _check_interval(ll, ul)
    if a == 1 and float(b).is_integer():
        fmt = interval_format(ll, width, bits)
        unit = compile_on_interval(ctx, MixedGamma.single(int(b) - 1, 0.0), bits, 0.0, 1.0,
                                   site=_unit_site(ctx, site, width))
        return shift_scale(complement(unit), width, ll, fmt)
    if b == 1 and float(a).is_integer():
        return general_gamma(ctx, bits, int(a) - 1, 0.0, ll, ul, site)

    def dens(x: float) -> float:
        t = (x - ll) / width
        if t <= 0.0 or t >= 1.0:
            return 0.0
        return t ** (a - 1) * (1 - t) ** (b - 1)
    return bitblast(ctx, bits, DensityFn(dens, ll, ul), site=site, **piecewise)


def _unit_site(ctx: InferenceContext, site: Site | None, width: float) -> Site:
    if site is not None:
        return site
    return Site(ctx.new_block(), _log2_exact(width) - 1)


def laplace(ctx: InferenceContext, bits: int, mu: float, scale: float, ll: float, ul: float,
            site: Site | None = None) -> BitVectorDist:
    """Laplace on a range centred at mu; each half gets bits-1 bits (2*bits-1 flips)."""
    if bits < 2:
        raise ValueError("laplace needs at least two bits")
    r = mu - ll
    if r <= 0 or ul - mu != r:
        raise ValueError("laplace range must be centred on mu")
    fmt = interval_format(ll, ul - ll, bits)
    return compile_laplace(ctx, mu, scale, r, bits - 1, fmt, site)


# ------------------------------------------------------------------ piecewise
@dataclass
class PieceFit:
    lo: float
    width: float
    weight: float
    kind: str
    param: float
    target_ratio: float
    cells: int

    def model_ratio(self) -> float:
        """Last-to-first cell mass ratio implied by the fitted parameter."""
        m = self.cells
        if m == 1 or self.weight == 0.0:
            return 1.0
        if self.kind == "exponential":
            delta = self.width / m
            return math.exp(self.param * delta * (m - 1))
        c = self.param
        if math.isinf(c):
            # a pure ramp; steeper ratios are out of reach for a linear piece
            return 2.0 * m - 1.0
        d = 1.0 / m
        return (1.0 + c * (1.0 - d / 2.0)) / (1.0 + c * d / 2.0)


def _cell_masses(density: DensityFn, lo: float, width: float, m: int) -> tuple[float, float, float]:
    step = width / m
    first = density.mass(lo, lo + step)
    last = density.mass(lo + width - step, lo + width)
    total = density.mass(lo, lo + width)
    return first, last, total


def fit_pieces(density: DensityFn, bits: int, num_pieces: int, kind: str) -> list[PieceFit]:
    """Equal-width pieces with normalised masses and ratio-matched shape parameters."""
    if kind not in PIECE_KINDS:
        raise ValueError(f"piece kind must be one of {PIECE_KINDS}")
    depth = _log2_exact(float(num_pieces)) if num_pieces > 0 else -1
    if depth < 0 or depth > bits:
        raise ValueError(f"{num_pieces} pieces do not fit {bits} bits")
    width = _check_interval(density.ll, density.ul)
    pw = width / num_pieces
    m = 1 << (bits - depth)
    raw = []
    for j in range(num_pieces):
        lo = density.ll + j * pw
        raw.append((lo, *_cell_masses(density, lo, pw, m)))
    total = math.fsum(r[3] for r in raw)
    if not math.isfinite(total) or total <= 0.0:
        raise QuadratureError("density has no usable mass")
    fits = []
    for lo, first, last, mass in raw:
        w = max(mass, 0.0) / total
        ratio = last / first if first > 0 and last > 0 else (1.0 if first == last else math.nan)
        if w == 0.0 or m == 1:
            param = 0.0
        elif kind == "exponential":
            param = _fit_exponential(first, last, pw / m, m)
        else:
            param = _fit_linear(first, last, m)
        fits.append(PieceFit(lo, pw, w, kind, param, ratio, m))
    return fits


_MAX_EXPONENT = 700.0


def _fit_exponential(first: float, last: float, delta: float, m: int) -> float:
    span = delta * (m - 1)
    if first > 0 and last > 0:
        return math.log(last / first) / span
    # one end underflowed: steepest representable slope in that direction
    if first <= 0 and last <= 0:
        return 0.0
    return (_MAX_EXPONENT if first <= 0 else -_MAX_EXPONENT) / span


def _fit_linear(first: float, last: float, m: int) -> float:
    """Slope c of the local density 1 + c*u, u in [0, 1), clamped to stay nonnegative."""
    d = 1.0 / m
    if first <= 0:
        return math.inf
    r = last / first
    denom = 1.0 - d * (r + 1.0) / 2.0
    if denom <= 0:
        return math.inf
    return max((r - 1.0) / denom, -1.0)


def _compile_piece(ctx: InferenceContext, fit: PieceFit, b: int, fmt: FixedPointFormat,
                   site: Site) -> BitVectorDist:
    if fit.weight == 0.0:
        return constant(ctx, fit.lo, fmt)
    if fit.kind == "exponential":
        return compile_on_interval(ctx, MixedGamma.single(0, fit.param), b, fit.lo, fit.width,
                                   fmt, site)
    c = fit.param
    if c == 0.0:
        unit = compile_exponential(ctx, 0.0, b, site)
    else:
        # 1 + c u  is a mix of the flat density and u (or 1 - u when falling)
        if math.isinf(c):
            w_lin = 1.0
        elif c > 0:
            w_lin = (c / 2.0) / (1.0 + c / 2.0)
        else:
            w_lin = (-c / 2.0) / (1.0 + c / 2.0)
        g = ctx.flip(min(w_lin, 1.0), block=site.block, band=site.guard)
        ramp = compile_gamma1(ctx, 0.0, b, site)
        if c < 0:
            ramp = complement(ramp)
        flat = compile_exponential(ctx, 0.0, b, site)
        unit = mux(g, ramp, flat)
    return shift_scale(unit, fit.width, fit.lo, fmt)


def bitblast(ctx: InferenceContext, bits: int, density: DensityFn, num_pieces: int = 16,
             kind: str = "exponential", site: Site | None = None,
             fits: list[PieceFit] | None = None) -> BitVectorDist:
    """Piecewise approximation of an arbitrary density on [ll, ul) with 2^bits grid cells.

    The piece index is chosen by a balanced tree of flips; the flip at depth
    d sits with the bit that the piece index contributes at that depth.
    """
    if fits is None:
        fits = fit_pieces(density, bits, num_pieces, kind)
    num_pieces = len(fits)
    depth = _log2_exact(float(num_pieces))
    width = density.ul - density.ll
    top = _log2_exact(width) - 1
    if site is None:
        site = Site(ctx.new_block(), top)
    fmt = interval_format(density.ll, width, bits)
    piece_bits = bits - depth
    # piece-local guards go below the selectors and above the piece bits
    piece_site = Site(site.block, site.top_exp - depth, site.top_exp - depth + 0.5)

    def build(lo: int, hi: int, d: int) -> BitVectorDist:
        if hi - lo == 1:
            f = fits[lo]
            if piece_bits == 0:
                return constant(ctx, f.lo, fmt)
            return _compile_piece(ctx, f, piece_bits, fmt, piece_site)
        mid = (lo + hi) // 2
        left_w = math.fsum(f.weight for f in fits[lo:mid])
        right_w = math.fsum(f.weight for f in fits[mid:hi])
        tot = left_w + right_w
        theta = right_w / tot if tot > 0 else 0.5
        g = ctx.flip(min(max(theta, 0.0), 1.0), block=site.block, band=site.top_exp - d)
        right = build(mid, hi, d + 1)
        left = build(lo, mid, d + 1)
        return mux(g, right, left)

    return build(0, num_pieces, 0)


# -------------------------------------------------------------- named, pieces
def default_gaussian_range(mu: float, sigma: float) -> tuple[float, float]:
    """mu +- 8 sigma, widened symmetrically to a power-of-two width."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    width = 2.0 ** math.ceil(math.log2(16.0 * sigma))
    return mu - width / 2.0, mu + width / 2.0


def gaussian_density(mu: float, sigma: float, ll: float, ul: float) -> DensityFn:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    inv = 1.0 / (2.0 * sigma * sigma)
    return DensityFn(lambda x: math.exp(-(x - mu) ** 2 * inv), ll, ul)


def gaussian(ctx: InferenceContext, bits: int, mu: float, sigma: float,
             ll: float | None = None, ul: float | None = None, num_pieces: int = 16,
             kind: str = "exponential", site: Site | None = None) -> BitVectorDist:
    if ll is None or ul is None:
        ll, ul = default_gaussian_range(mu, sigma)
    return bitblast(ctx, bits, gaussian_density(mu, sigma, ll, ul), num_pieces, kind, site)


def student_t(ctx: InferenceContext, bits: int, nu: float, ll: float, ul: float,
              num_pieces: int = 16, kind: str = "exponential",
              site: Site | None = None) -> BitVectorDist:
    if nu <= 0:
        raise ValueError("degrees of freedom must be positive")
    p = -(nu + 1.0) / 2.0
    return bitblast(ctx, bits, DensityFn(lambda x: (1.0 + x * x / nu) ** p, ll, ul),
                    num_pieces, kind, site)
