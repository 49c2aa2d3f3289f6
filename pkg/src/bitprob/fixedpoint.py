"""Random fixed-point numbers represented as tuples of Boolean formulas."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .bdd import FALSE, TRUE
from .core import Block, BoolRv, InferenceContext


class FormatError(ValueError):
    pass


class RepresentationError(ValueError):
    pass


@dataclass(frozen=True)
class FixedPointFormat:
    total_bits: int
    frac_bits: int
    signed: bool = False

    def __post_init__(self) -> None:
        if self.total_bits < 1:
            raise FormatError("total_bits must be positive")
        if not 0 <= self.frac_bits <= self.total_bits:
            raise FormatError("frac_bits must lie in [0, total_bits]")

    @property
    def int_bits(self) -> int:
        return self.total_bits - self.frac_bits

    @property
    def step(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def lo(self) -> float:
        return -(2.0 ** (self.int_bits - 1)) if self.signed else 0.0

    @property
    def hi(self) -> float:
        """Exclusive upper end of the representable range."""
        return 2.0 ** (self.int_bits - 1) if self.signed else 2.0 ** self.int_bits

    def exponent(self, i: int) -> int:
        """log2 of the magnitude of bit ``i`` (0 = most significant)."""
        return self.int_bits - 1 - i

    def weight(self, i: int) -> float:
        w = 2.0 ** self.exponent(i)
        return -w if (self.signed and i == 0) else w

    def code_of(self, value: float | Fraction) -> int:
        """Two's-complement (or unsigned) integer code of an exactly representable value."""
        scaled = Fraction(value) * (1 << self.frac_bits)
        if scaled.denominator != 1:
            raise RepresentationError(f"{float(value)} is not a multiple of 2^-{self.frac_bits}")
        if not Fraction(self.lo) <= Fraction(value) < Fraction(self.hi):
            raise RepresentationError(f"{float(value)} outside [{self.lo}, {self.hi})")
        return int(scaled) % (1 << self.total_bits)

    def value_of(self, code: int) -> float:
        if self.signed and code >= 1 << (self.total_bits - 1):
            code -= 1 << self.total_bits
        return math.ldexp(code, -self.frac_bits)

    def representable(self, value: float) -> bool:
        try:
            self.code_of(value)
        except RepresentationError:
            return False
        return True

    def nearest(self, value: float) -> float:
        """Closest grid point (ties upward), clamped into range."""
        k = math.floor(value * 2.0 ** self.frac_bits + 0.5)
        v = math.ldexp(k, -self.frac_bits)
        return min(max(v, self.lo), self.hi - self.step)


def common_format(a: FixedPointFormat, b: FixedPointFormat) -> FixedPointFormat:
    """Smallest format that holds every value of both ``a`` and ``b`` exactly."""
    frac = max(a.frac_bits, b.frac_bits)
    signed = a.signed or b.signed

    def need(f: FixedPointFormat) -> int:
        return f.int_bits + (1 if signed and not f.signed else 0)

    ib = max(need(a), need(b))
    return FixedPointFormat(ib + frac, frac, signed)


def binarize(r: float | Fraction, b: int) -> tuple[int, ...]:
    """Bits (v1..vb) with r = sum v_i 2^-i; r must lie on the b-bit grid of [0, 1)."""
    scaled = Fraction(r) * (1 << b)
    if scaled.denominator != 1 or not 0 <= scaled < (1 << b):
        raise RepresentationError(f"{float(r)} is not on the {b}-bit grid of [0,1)")
    k = int(scaled)
    return tuple((k >> (b - 1 - i)) & 1 for i in range(b))


class BitVectorDist:
    """Distribution over a fixed-point format, bits most significant first.

    Sums and multiplexers built through :func:`plus`, :func:`minus` and
    :func:`mux` keep their structure until the bits are needed, so an
    equality test against a sum can be compiled without materialising
    the carry chain.
    """

    def __init__(self, ctx: InferenceContext, fmt: FixedPointFormat,
                 bits: Sequence[int] | None = None, block: Block | None = None,
                 expr: tuple | None = None, branches: tuple | None = None):
        if bits is not None and len(bits) != fmt.total_bits:
            raise FormatError(f"{len(bits)} bits for a {fmt.total_bits}-bit format")
        if bits is None and expr is None:
            raise ValueError("need bits or a deferred expression")
        self.ctx = ctx
        self.format = fmt
        self._bits = tuple(bits) if bits is not None else None
        self.block = block
        self.expr = expr
        # (guard, then, else) when built by mux; lets observations split per branch
        self.branches = branches

    @property
    def bits(self) -> tuple[int, ...]:
        if self._bits is None:
            self._bits = _force(self)
        return self._bits

    @property
    def is_constant(self) -> bool:
        return self.expr is None and all(b < 2 for b in self.bits)

    def constant_value(self) -> float:
        code = 0
        for b in self.bits:
            if b >= 2:
                raise ValueError("not a constant")
            code = (code << 1) | b
        return self.format.value_of(code)

    def values(self) -> list[float]:
        return [self.format.value_of(c) for c in range(1 << self.format.total_bits)]

    def __repr__(self) -> str:
        f = self.format
        return f"BitVectorDist({f.total_bits}b, {f.frac_bits} frac, {'signed' if f.signed else 'unsigned'})"


def constant(ctx: InferenceContext, value: float, fmt: FixedPointFormat) -> BitVectorDist:
    code = fmt.code_of(value)
    n = fmt.total_bits
    bits = [TRUE if (code >> (n - 1 - i)) & 1 else FALSE for i in range(n)]
    return BitVectorDist(ctx, fmt, bits)


def _check_same(x: BitVectorDist, y: BitVectorDist) -> None:
    if x.format != y.format:
        raise FormatError(f"format mismatch: {x.format} vs {y.format}")
    if x.ctx is not y.ctx:
        raise ValueError("operands belong to different contexts")


def _cmp_bits(x: BitVectorDist) -> list[int]:
    bits = list(x.bits)
    if x.format.signed:
        bits[0] = x.ctx.store.apply_not(bits[0])
    return bits


def less_than(x: BitVectorDist, y: BitVectorDist) -> BoolRv:
    """Formula true exactly when value(x) < value(y)."""
    _check_same(x, y)
    s = x.ctx.store
    xb, yb = _cmp_bits(x), _cmp_bits(y)
    acc = FALSE
    for xi, yi in zip(reversed(xb), reversed(yb)):
        acc = s.apply_ite(xi, s.apply_and(yi, acc), s.apply_or(yi, acc))
    return BoolRv(acc, x.ctx)


def less_equal(x: BitVectorDist, y: BitVectorDist) -> BoolRv:
    return ~less_than(y, x)


def _bitwise_equal(ctx: InferenceContext, xb: Sequence[int], yb: Sequence[int]) -> int:
    s = ctx.store
    acc = TRUE
    for xi, yi in zip(xb, yb):
        acc = s.apply_and(acc, s.apply_iff(xi, yi))
        if acc == FALSE:
            break
    return acc


def equals(x: BitVectorDist, y: BitVectorDist) -> BoolRv:
    """Formula true exactly when the two values coincide."""
    _check_same(x, y)
    return BoolRv(_equals(x, y), x.ctx)


def _equals(x: BitVectorDist, y: BitVectorDist) -> int:
    s = x.ctx.store
    if x._bits is None and x.expr[0] == "mux":
        _, g, t, e = x.expr
        return s.apply_ite(g, _equals(t, y), _equals(e, y))
    if y._bits is None and y.expr[0] == "mux":
        return _equals(y, x)
    if x._bits is None and x.expr[0] == "sum":
        _, a, b, negate = x.expr
        return _sum_equals(a, b, negate, y.bits)
    if y._bits is None and y.expr[0] == "sum":
        return _equals(y, x)
    return _bitwise_equal(x.ctx, x.bits, y.bits)


def _sum_equals(a: BitVectorDist, b: BitVectorDist, negate: bool, target: Sequence[int]) -> int:
    """Formula for a + b == target (or a - b when ``negate``), with no overflow.

    Built from the most significant position downwards: the constraint over
    positions at or above p is expressed as a function of the carry entering
    p. High bits are decided first, so incompatible operand prefixes
    collapse to FALSE before the low-order carry logic is ever built.
    """
    s = a.ctx.store
    ab, bb = a.bits, b.bits
    if negate:
        bb = tuple(s.apply_not(v) for v in bb)
    h = {0: TRUE, 1: TRUE}
    for p in range(len(ab)):
        ap, bp, tp = ab[p], bb[p], target[p]
        ntp = s.apply_not(tp)
        nh = {}
        for c in (0, 1):
            branch = {}
            for va in (0, 1):
                for vb in (0, 1):
                    bit = va ^ vb ^ c
                    carry = (va & vb) | (va & c) | (vb & c)
                    branch[(va, vb)] = s.apply_and(tp if bit else ntp, h[carry])
            nh[c] = s.apply_ite(ap, s.apply_ite(bp, branch[(1, 1)], branch[(1, 0)]),
                                s.apply_ite(bp, branch[(0, 1)], branch[(0, 0)]))
        h = nh
    return h[1] if negate else h[0]


def _ripple(ctx: InferenceContext, ab: Sequence[int], bb: Sequence[int], carry: int):
    s = ctx.store
    out = [FALSE] * len(ab)
    carry_into_msb = carry
    for i in range(len(ab) - 1, -1, -1):
        if i == 0:
            carry_into_msb = carry
        x, y = ab[i], bb[i]
        xy = s.apply_xor(x, y)
        out[i] = s.apply_xor(xy, carry)
        carry = s.apply_or(s.apply_and(x, y), s.apply_and(carry, xy))
    return out, carry, carry_into_msb


def add(x: BitVectorDist, y: BitVectorDist, policy: str = "checked") -> BitVectorDist:
    """Same-width ripple-carry sum.

    ``checked`` records the overflow condition with the context, which
    raises at query time if it has nonzero probability under the evidence;
    ``wraparound`` drops the carry.
    """
    _check_same(x, y)
    if policy not in ("checked", "wraparound"):
        raise ValueError(f"unknown overflow policy {policy!r}")
    bits, carry_out, carry_msb = _ripple(x.ctx, x.bits, y.bits, FALSE)
    if policy == "checked":
        s = x.ctx.store
        ovf = s.apply_xor(carry_out, carry_msb) if x.format.signed else carry_out
        x.ctx.register_overflow(ovf)
    return BitVectorDist(x.ctx, x.format, bits, x.block or y.block)


def widen(x: BitVectorDist, fmt: FixedPointFormat) -> BitVectorDist:
    """Exact re-encoding into a format with at least as many integer and fractional bits."""
    f = x.format
    if fmt.frac_bits < f.frac_bits:
        raise FormatError("widen cannot drop fractional bits")
    need = f.int_bits + (1 if fmt.signed and not f.signed else 0)
    if fmt.int_bits < need or (f.signed and not fmt.signed):
        raise FormatError(f"{fmt} cannot hold every value of {f}")
    if fmt == f:
        return x
    if x.branches is not None:
        g, t, e = x.branches
        return mux(g, widen(t, fmt), widen(e, fmt), lazy=x._bits is None)
    if x._bits is None and x.expr[0] == "sum":
        _, a, b, negate = x.expr
        # sums are kept exact, so they extend like their operands
        return BitVectorDist(x.ctx, fmt, None, x.block, ("sum", widen(a, fmt), widen(b, fmt), negate))
    ext = x.bits[0] if f.signed else FALSE
    top = [ext] * (fmt.int_bits - f.int_bits)
    bottom = [FALSE] * (fmt.frac_bits - f.frac_bits)
    return BitVectorDist(x.ctx, fmt, top + list(x.bits) + bottom, x.block)


def _static_range(x: BitVectorDist) -> tuple[float, float]:
    """Interval of values the bit patterns can take, from constant bits only."""
    f = x.format
    lo = hi = 0.0
    for i, b in enumerate(x.bits):
        w = f.weight(i)
        if b == TRUE:
            lo += w
            hi += w
        elif b != FALSE:
            if w < 0:
                lo += w
            else:
                hi += w
    return lo, hi


def _frac_bits_of(value: float) -> int:
    q = Fraction(value)
    k = 0
    while (q * (1 << k)).denominator != 1:
        k += 1
    return k


def shift_scale(x: BitVectorDist, scale: float, offset: float = 0.0,
                fmt: FixedPointFormat | None = None) -> BitVectorDist:
    """Distribution of scale*x + offset for a power-of-two ``scale``.

    Without ``fmt`` the smallest format holding every possible result is
    chosen.
    """
    m, e = math.frexp(scale)
    if scale <= 0 or m != 0.5:
        raise FormatError(f"scale {scale} is not a power of two")
    k = e - 1
    f = x.format
    frac = f.frac_bits - k
    bits = list(x.bits)
    if frac < 0:
        bits = bits + [FALSE] * (-frac)
        frac = 0
    if frac > len(bits):
        ext = bits[0] if f.signed else FALSE
        bits = [ext] * (frac - len(bits)) + bits
    scaled = BitVectorDist(x.ctx, FixedPointFormat(len(bits), frac, f.signed), bits, x.block)
    lo, hi = _static_range(scaled)
    lo += offset
    hi += offset
    if fmt is None:
        fb = max(frac, _frac_bits_of(offset))
        signed = lo < 0
        ib = 0
        while True:
            if ib + fb > 0:
                cand = FixedPointFormat(ib + fb, fb, signed)
                if cand.lo <= lo and hi <= cand.hi - cand.step:
                    fmt = cand
                    break
            ib += 1
    if _frac_bits_of(offset) > fmt.frac_bits:
        raise RepresentationError(f"offset {offset} is not representable in {fmt}")
    if lo < fmt.lo or hi > fmt.hi - fmt.step:
        raise FormatError(f"values in [{lo}, {hi}] do not fit {fmt}")
    if x.branches is not None:
        # keep the mixture structure visible to observations and queries
        g, t, e = x.branches
        return mux(g, shift_scale(t, scale, offset, fmt), shift_scale(e, scale, offset, fmt))
    off_ib = math.frexp(abs(offset))[1] + 1 if offset else 0
    wide_ib = max(fmt.int_bits, scaled.format.int_bits + 1, off_ib) + 2
    wide_fb = max(fmt.frac_bits, frac)
    wide = FixedPointFormat(wide_ib + wide_fb, wide_fb, True)
    base = widen(scaled, wide)
    if offset != 0:
        c = constant(x.ctx, offset, wide)
        summed, _, _ = _ripple(x.ctx, base.bits, c.bits, FALSE)
        base = BitVectorDist(x.ctx, wide, summed, x.block)
    return narrow(base, fmt)


def narrow(x: BitVectorDist, fmt: FixedPointFormat) -> BitVectorDist:
    """Drop high bits that are pure sign/zero extension; values must already fit ``fmt``."""
    f = x.format
    if fmt.frac_bits > f.frac_bits:
        x = widen(x, FixedPointFormat(f.int_bits + fmt.frac_bits, fmt.frac_bits, f.signed))
        f = x.format
    if fmt.frac_bits < f.frac_bits:
        for b in x.bits[f.total_bits - (f.frac_bits - fmt.frac_bits):]:
            if b != FALSE:
                raise FormatError("narrowing would drop nonzero fractional bits")
    drop_top = f.int_bits - fmt.int_bits
    bits = list(x.bits)
    if drop_top < 0:
        return widen(x, fmt)
    keep = bits[drop_top: drop_top + fmt.total_bits]
    return BitVectorDist(x.ctx, fmt, keep, x.block)


def mux(guard: BoolRv | int, t: BitVectorDist, e: BitVectorDist, lazy: bool = False) -> BitVectorDist:
    """Bitwise if-then-else."""
    _check_same(t, e)
    g = guard.formula if isinstance(guard, BoolRv) else guard
    if g == TRUE:
        return t
    if g == FALSE:
        return e
    if lazy and (t._bits is None or e._bits is None):
        return BitVectorDist(t.ctx, t.format, None, t.block or e.block, ("mux", g, t, e), (g, t, e))
    s = t.ctx.store
    bits = [s.apply_ite(g, a, b) for a, b in zip(t.bits, e.bits)]
    return BitVectorDist(t.ctx, t.format, bits, t.block or e.block, branches=(g, t, e))


def plus(x: BitVectorDist, y: BitVectorDist) -> BitVectorDist:
    """Exact sum in a format one integer bit wider than both operands."""
    return _exact_sum(x, y, False)


def minus(x: BitVectorDist, y: BitVectorDist) -> BitVectorDist:
    return _exact_sum(x, y, True)


def _exact_sum(x: BitVectorDist, y: BitVectorDist, negate: bool) -> BitVectorDist:
    base = common_format(x.format, y.format)
    if base.signed:
        ib = base.int_bits + 1
    else:
        ib = base.int_bits + (1 if negate else 2)
    fmt = FixedPointFormat(ib + base.frac_bits, base.frac_bits, True)
    xa, ya = widen(x, fmt), widen(y, fmt)
    return BitVectorDist(x.ctx, fmt, None, x.block or y.block, ("sum", xa, ya, negate))


def _force(x: BitVectorDist) -> tuple[int, ...]:
    kind = x.expr[0]
    s = x.ctx.store
    if kind == "mux":
        _, g, t, e = x.expr
        return tuple(s.apply_ite(g, a, b) for a, b in zip(t.bits, e.bits))
    if kind == "sum":
        _, a, b, negate = x.expr
        bb = b.bits
        if negate:
            bb = tuple(s.apply_not(v) for v in bb)
        out, _, _ = _ripple(x.ctx, a.bits, bb, TRUE if negate else FALSE)
        return tuple(out)
    raise ValueError(f"unknown deferred expression {kind}")


def complement(x: BitVectorDist) -> BitVectorDist:
    """Bitwise negation; on an unsigned unit grid this maps cell k to cell 2^b-1-k."""
    if x.branches is not None:
        g, t, e = x.branches
        return mux(g, complement(t), complement(e))
    s = x.ctx.store
    return BitVectorDist(x.ctx, x.format, [s.apply_not(b) for b in x.bits], x.block)
