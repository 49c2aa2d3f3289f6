"""Discrete probabilistic closures: weighted flips, global evidence, conditional queries.

Variable placement matters a great deal for diagram size. The context
keeps a region at the top of the order for free-standing Boolean flips,
followed by one *block* per independent continuous quantity. Inside a
block, variables are grouped into *bands*: a guard band for mixture
selectors first, then one band per bit weight, most significant first.
Quantities that are later compared or added bit-by-bit live in the same
block so that their same-weight bits end up adjacent.
"""
from __future__ import annotations

from dataclasses import dataclass

from .bdd import FALSE, TRUE, BDDStore, VarLabel, WeightMap, wmc

GUARD = float("inf")


class ZeroEvidenceError(ArithmeticError):
    def __init__(self, evidence_wmc: float = 0.0):
        super().__init__("zero evidence: the observations have probability 0")
        self.evidence_wmc = evidence_wmc


class OverflowDetected(ArithmeticError):
    pass


class Block:
    """A contiguous region of the variable order split into bands."""

    def __init__(self, ctx: "InferenceContext", name: str):
        self.ctx = ctx
        self.name = name
        self.marker = ctx.store.fresh_var(name=f"<{name}>")
        self._last: dict[float, VarLabel] = {}

    def anchor_for(self, band: float) -> VarLabel:
        last = self._last.get(band)
        if last is not None:
            return last
        higher = [k for k in self._last if k > band]
        if higher:
            return self._last[min(higher)]
        return self.marker

    def new_var(self, band: float, name: str | None = None) -> VarLabel:
        lab = self.ctx.store.var_after(self.anchor_for(band), name)
        self._last[band] = lab
        return lab

    def __repr__(self) -> str:
        return f"Block({self.name})"


@dataclass(frozen=True)
class BoolRv:
    formula: int
    ctx: "InferenceContext"

    def __and__(self, other: "BoolRv") -> "BoolRv":
        return BoolRv(self.ctx.store.apply_and(self.formula, other.formula), self.ctx)

    def __or__(self, other: "BoolRv") -> "BoolRv":
        return BoolRv(self.ctx.store.apply_or(self.formula, other.formula), self.ctx)

    def __invert__(self) -> "BoolRv":
        return BoolRv(self.ctx.store.apply_not(self.formula), self.ctx)


class InferenceContext:
    def __init__(self) -> None:
        self.store = BDDStore()
        self.weights = WeightMap(self.store)
        self.evidence: int = TRUE
        self.flip_count = 0
        self.query_count = 0
        self._top_marker = self.store.fresh_var(name="<top>")
        self._top_last: VarLabel | None = None
        self._blocks: list[Block] = []
        self._overflow: list[int] = []
        self._overflow_checked = 0

    # ----------------------------------------------------------------- layout
    def new_block(self, name: str | None = None) -> Block:
        blk = Block(self, name or f"b{len(self._blocks)}")
        self._blocks.append(blk)
        return blk

    def _place(self, level_hint: int | None, block: Block | None, band: float | None,
               name: str | None) -> VarLabel:
        if level_hint is not None:
            return self.store.fresh_var(level_hint, name)
        if block is not None:
            return block.new_var(GUARD if band is None else band, name)
        lab = self.store.var_after(self._top_last or self._top_marker, name)
        self._top_last = lab
        return lab

    # ------------------------------------------------------------------ flips
    def flip_var(self, theta: float, level_hint: int | None = None,
                 block: Block | None = None, band: float | None = None,
                 name: str | None = None) -> VarLabel:
        theta = float(theta)
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"flip parameter {theta} outside [0, 1]")
        lab = self._place(level_hint, block, band, name or f"f{self.flip_count}")
        self.weights[lab] = theta
        self.flip_count += 1
        return lab

    def flip(self, theta: float, level_hint: int | None = None,
             block: Block | None = None, band: float | None = None) -> BoolRv:
        lab = self.flip_var(theta, level_hint, block, band)
        return BoolRv(self.store.literal(lab), self)

    def const(self, value: bool) -> BoolRv:
        return BoolRv(TRUE if value else FALSE, self)

    # --------------------------------------------------------------- evidence
    def observe(self, cond: BoolRv | int) -> None:
        f = cond.formula if isinstance(cond, BoolRv) else cond
        self.evidence = self.store.apply_and(self.evidence, f)

    def register_overflow(self, formula: int) -> None:
        if formula != FALSE:
            self._overflow.append(formula)

    def check_overflow(self) -> None:
        """Raise if any pending overflow condition has nonzero weight under the evidence."""
        for f in self._overflow[self._overflow_checked:]:
            both = self.store.apply_and(f, self.evidence)
            if wmc(both, self.weights) > 0.0:
                raise OverflowDetected("fixed-point addition overflows with nonzero probability")
        self._overflow_checked = len(self._overflow)

    # ---------------------------------------------------------------- queries
    def evidence_wmc(self) -> float:
        return wmc(self.evidence, self.weights)

    def wmc(self, formula: int) -> float:
        return wmc(formula, self.weights)

    def _normalizer(self) -> float:
        z = self.evidence_wmc()
        if z == 0.0:
            raise ZeroEvidenceError(z)
        self.check_overflow()
        return z

    def probability(self, event: BoolRv | int) -> float:
        f = event.formula if isinstance(event, BoolRv) else event
        z = self._normalizer()
        self.query_count += 1
        num = wmc(self.store.apply_and(f, self.evidence), self.weights)
        return num / z

    def ite_bool(self, guard: BoolRv, t: BoolRv, e: BoolRv) -> BoolRv:
        return BoolRv(self.store.apply_ite(guard.formula, t.formula, e.formula), self)


def flip(ctx: InferenceContext, theta: float, level_hint: int | None = None) -> BoolRv:
    return ctx.flip(theta, level_hint)


def observe(ctx: InferenceContext, cond: BoolRv) -> None:
    ctx.observe(cond)


def probability(ctx: InferenceContext, event: BoolRv) -> float:
    return ctx.probability(event)


def ite_bool(guard: BoolRv, t: BoolRv, e: BoolRv) -> BoolRv:
    return guard.ctx.ite_bool(guard, t, e)
